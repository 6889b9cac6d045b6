mod common;

use std::collections::BTreeMap;

use gmsneg::agent_opt::{step_value, MarketView};
use gmsneg::domain::{AgentProfile, FaultEvent, GammaSpec, NetworkModel};
use gmsneg::negotiation::{
    audit_budget_balance, dispatch_series, penalty_violations, run_negotiation, NegotiationConfig, NegotiationState,
};
use gmsneg::scenarios::{SamplingScheme, ScenarioBook};

fn markets(count: usize) -> Vec<(u64, common::MarketInstance)> {
    (1..)
        .filter_map(|s| common::random_market(s).map(|m| (s, m)))
        .take(count)
        .collect()
}

fn negotiate(m: &common::MarketInstance, cfg: &NegotiationConfig) -> NegotiationState {
    run_negotiation(&m.agents, &m.net, m.grid.len(), &m.book, cfg).unwrap()
}

#[test]
fn ledger_is_weakly_balanced() {
    for (seed, m) in markets(30) {
        let st = negotiate(&m, &NegotiationConfig::default());
        let audit = audit_budget_balance(&st);
        assert!(audit.weakly_balanced, "seed {seed}: {:?}", audit.violations);
        // a penalized day bid again and then accepted keeps its charge
        if penalty_violations(&st).is_empty() {
            assert!(audit.balanced_at_convergence, "seed {seed}: {:?}", audit.violations);
        }
        assert!(st.iterations[0].penalties.iter().flatten().all(|&p| p == 0.0));
        if st.converged {
            assert!(st.last().unwrap().agreed());
        }
    }
}

/// A day rejected once stays penalized in every later round.
#[test]
fn penalties_only_accumulate() {
    for (seed, m) in markets(30) {
        let st = negotiate(&m, &NegotiationConfig::default());
        for w in st.iterations.windows(2) {
            for (n, row) in w[0].penalties.iter().enumerate() {
                for (d, &p) in row.iter().enumerate() {
                    let rejected = w[0].bids[n][d] && !w[0].accepted[n][d];
                    if p < 0.0 || rejected {
                        assert!(w[1].penalties[n][d] < 0.0, "seed {seed} agent {n} day {}", d + 1);
                    }
                }
            }
        }
    }
}

/// A fixed penalty of `1.01 · r` times the spread of an agent's step
/// values is enough to keep penalized days unbid.
#[test]
fn spread_sized_penalty_removes_repeat_bids() {
    let cfg = NegotiationConfig::default();
    for (seed, mut m) in markets(40) {
        let dispatch = dispatch_series(&m.agents, m.grid.len(), &cfg).unwrap();
        for (n, a) in m.agents.iter_mut().enumerate() {
            let market = MarketView {
                price: &m.net.price,
                dispatch: &dispatch[n],
            };
            let mut spread = 0.0f64;
            for (e, set) in a.fault_events.iter().zip(&m.book.sets[n]) {
                let v: Vec<f64> = e
                    .horizon()
                    .map(|t| step_value(a, e, set, &market, t, cfg.form))
                    .collect();
                let hi = v.iter().cloned().fold(f64::MIN, f64::max);
                let lo = v.iter().cloned().fold(f64::MAX, f64::min);
                spread = spread.max(hi - lo);
            }
            a.gamma = GammaSpec::Fixed(1.01 * a.repair_time as f64 * spread + 1.0);
        }
        let st = negotiate(&m, &cfg);
        assert!(penalty_violations(&st).is_empty(), "seed {seed}");
        assert!(st.converged, "seed {seed}");
    }
}

/// Two units share a window in which only one of them may be out, and
/// neither can leave it: the negotiation runs to the cap.
#[test]
fn shared_window_hits_the_cap() {
    let agent = |id| {
        let e = FaultEvent::new(1, 2, 0.5, 1, 3).unwrap();
        AgentProfile::new(id, 1, 0.0, 100.0, vec![1000.0; 7], 2, 1e-3, GammaSpec::Auto, vec![e]).unwrap()
    };
    let spare = AgentProfile::new(
        3,
        1,
        0.0,
        100.0,
        vec![1000.0; 7],
        1,
        1e-3,
        GammaSpec::Auto,
        vec![FaultEvent::new(4, 5, 0.5, 4, 7).unwrap()],
    )
    .unwrap();
    let agents = vec![agent(1), agent(2), spare];
    let units = BTreeMap::from([(1, 1), (2, 1), (3, 1)]);
    // day 1 tolerates one unit out, days 2 and 3 none
    let load = vec![vec![150.0, 250.0, 250.0, 150.0, 150.0, 150.0, 150.0]];
    let net = NetworkModel::new(100.0, vec![1], vec![], units, load, vec![30.0; 7]).unwrap();
    let book = ScenarioBook::build(&agents, 10, 7, SamplingScheme::MonteCarlo).unwrap();
    let cfg = NegotiationConfig {
        max_iterations: 8,
        ..NegotiationConfig::default()
    };
    let st = run_negotiation(&agents, &net, 7, &book, &cfg).unwrap();
    assert!(!st.converged);
    assert_eq!(st.iteration_count(), 8);
    assert!(st.ledger.sums().iter().all(|&s| s <= 0.0));
    assert!(st.iterations.iter().all(|s| !s.agreed()));
}

#[test]
fn reruns_are_identical() {
    for (_, m) in markets(5) {
        let cfg = NegotiationConfig::default();
        assert_eq!(negotiate(&m, &cfg), negotiate(&m, &cfg));
    }
}
