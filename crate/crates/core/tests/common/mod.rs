//! Instance generators and brute-force oracles shared by the integration
//! tests. Oracles evaluate the model from its defining sums and never call
//! the solvers they check.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gmsneg::agent_opt::DeteriorationForm;
use gmsneg::domain::{validate_inputs, AgentProfile, Day, FaultEvent, GammaSpec, Line, NetworkModel, TimeGrid};
use gmsneg::lp::{LpOutcome, LpProblem, RowKind, SimplexOptions};
use gmsneg::scenarios::{SamplingScheme, Scenario, ScenarioBook, ScenarioSet};
use gmsneg::tso_opt::dcopf_feasible;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sgn(v: i64) -> f64 {
    (v > 0) as i64 as f64 - (v < 0) as i64 as f64
}

// ---------------------------------------------------------------- agents

pub struct AgentInstance {
    pub profile: AgentProfile,
    pub set: ScenarioSet,
    pub price: Vec<f64>,
    pub dispatch: Vec<f64>,
    pub incentive: Vec<f64>,
}

/// One fault horizon `1..=T` with `T <= 20`, `r <= 4`, `S <= 5`.
pub fn random_agent_instance(r: &mut ChaCha8Rng) -> AgentInstance {
    let days = r.random_range(2..=20usize);
    let t1 = r.random_range(1..days);
    let tau = r.random_range(t1 + 1..=days);
    let event = FaultEvent::new(t1, tau, 1.0, 1, days).unwrap();
    let count = r.random_range(1..=5usize.min(days - t1));
    let mut fails: Vec<Day> = (t1 + 1..=days).collect();
    // partial shuffle for distinct failure days
    for i in 0..count {
        let j = r.random_range(i..fails.len());
        fails.swap(i, j);
    }
    fails.truncate(count);
    fails.sort_unstable();
    let raw: Vec<f64> = (0..count).map(|_| r.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let set = ScenarioSet {
        agent: 1,
        event: 0,
        detect_time: t1,
        horizon_end: days,
        scenarios: fails
            .iter()
            .zip(&raw)
            .map(|(&fail_time, &p)| Scenario {
                fail_time,
                prob: p / total,
            })
            .collect(),
        clamped_mass: 0.0,
    };
    let alpha = 10f64.powf(r.random_range(-7.0..0.0));
    let q_max = r.random_range(1.0..10.0);
    let cost: Vec<f64> = (0..days).map(|_| r.random_range(0.0..20.0)).collect();
    let profile = AgentProfile::new(
        1,
        1,
        0.0,
        q_max,
        cost,
        r.random_range(1..=4),
        alpha,
        GammaSpec::Auto,
        vec![event],
    )
    .unwrap();
    let price = (0..days).map(|_| r.random_range(0.0..5.0)).collect();
    let dispatch = vec![q_max; days];
    let incentive = (0..days)
        .map(|_| {
            if r.random_bool(0.25) {
                -r.random_range(0.0..50.0)
            } else {
                0.0
            }
        })
        .collect();
    AgentInstance {
        profile,
        set,
        price,
        dispatch,
        incentive,
    }
}

/// Literal objective of a maintenance vector `x` over the horizon `1..=T`.
pub fn agent_objective_oracle(inst: &AgentInstance, x: &[bool], form: DeteriorationForm) -> f64 {
    let a = &inst.profile;
    let t1 = inst.set.detect_time as i64;
    let mut total = 0.0;
    for t in 1..=x.len() {
        let ti = t as i64;
        if x[t - 1] {
            total += inst.incentive[t - 1];
            continue;
        }
        let profit = inst.price[t - 1] * inst.dispatch[t - 1] - a.gen_cost[t - 1];
        let mut alive = 0.0;
        let mut bracket = 0.0;
        let mut weighted = 0.0;
        for s in &inst.set.scenarios {
            let t2 = s.fail_time as i64;
            alive += s.prob / 2.0 * (1.0 - sgn(ti - t2));
            bracket += sgn(ti - t1) - s.prob * sgn(ti - t2);
            weighted += s.prob * (sgn(ti - t1) - sgn(ti - t2));
        }
        let growth = a.alpha * ((ti - t1) as f64).exp();
        let det = match form {
            DeteriorationForm::AsPrinted => growth * bracket,
            DeteriorationForm::Expectation => growth * weighted,
        };
        total += alive * profit - det;
    }
    total
}

/// Every vector with between 1 and `r` ones, kept if its ones are
/// contiguous; returns the best objective.
pub fn agent_brute_force(inst: &AgentInstance, form: DeteriorationForm) -> f64 {
    let days = inst.price.len();
    let r = inst.profile.repair_time;
    let mut best = f64::NEG_INFINITY;
    for mask in 1u32..(1u32 << days) {
        let ones = mask.count_ones() as usize;
        if ones > r {
            continue;
        }
        let shifted = mask >> mask.trailing_zeros();
        if shifted & (shifted + 1) != 0 {
            continue;
        }
        let x: Vec<bool> = (0..days).map(|i| mask >> i & 1 == 1).collect();
        best = best.max(agent_objective_oracle(inst, &x, form));
    }
    best
}

// ------------------------------------------------------------------- grid

/// Connected network on `buses` buses: a random spanning tree plus a few
/// extra lines.
pub fn random_network(r: &mut ChaCha8Rng, buses: usize, days: usize, load: &[f64], cap_scale: f64) -> NetworkModel {
    let ids: Vec<usize> = (1..=buses).collect();
    let mut lines = Vec::new();
    let mut pairs = std::collections::BTreeSet::new();
    for j in 2..=buses {
        let i = r.random_range(1..j);
        pairs.insert((i, j));
    }
    for _ in 0..r.random_range(0..=buses) {
        let i = r.random_range(1..=buses);
        let j = r.random_range(1..=buses);
        if i < j {
            pairs.insert((i, j));
        }
    }
    for (i, j) in pairs {
        lines.push(Line {
            from: i,
            to: j,
            susceptance: r.random_range(2.0..20.0),
            capacity: r.random_range(0.3..1.2) * cap_scale,
        });
    }
    let shares: Vec<f64> = (0..buses).map(|_| r.random_range(0.0..1.0)).collect();
    let total: f64 = shares.iter().sum();
    let nodal = shares
        .iter()
        .map(|s| (0..days).map(|t| load[t] * s / total).collect())
        .collect();
    let price = (0..days).map(|_| r.random_range(20.0..40.0)).collect();
    NetworkModel::new(100.0, ids, lines, BTreeMap::new(), nodal, price).unwrap()
}

pub fn with_units(net: &NetworkModel, agents: &[AgentProfile]) -> NetworkModel {
    let map = agents.iter().map(|a| (a.id, a.bus)).collect();
    NetworkModel::new(
        net.base_mva,
        net.buses.clone(),
        net.lines.clone(),
        map,
        net.load.clone(),
        net.price.clone(),
    )
    .unwrap()
}

pub struct TsoInstance {
    pub net: NetworkModel,
    pub agents: Vec<AgentProfile>,
    pub book: ScenarioBook,
    pub bids: Vec<Vec<bool>>,
}

/// `<= 4` buses, `<= 4` units, `<= 5` days; one contiguous bid block per unit.
pub fn random_tso_instance(r: &mut ChaCha8Rng, with_min_output: bool) -> TsoInstance {
    let days = r.random_range(1..=5usize);
    let buses = r.random_range(1..=4usize);
    let units = r.random_range(1..=4usize);
    let mut agents = Vec::new();
    let mut sets = Vec::new();
    let mut bids = Vec::new();
    for id in 1..=units {
        let q_max = r.random_range(20.0..100.0);
        let q_min = if with_min_output && r.random_bool(0.5) {
            r.random_range(0.0..0.6) * q_max
        } else {
            0.0
        };
        let event = FaultEvent::new(1, days + 1, 1.0, 1, days + 1).unwrap();
        let agent = AgentProfile::new(
            id,
            r.random_range(1..=buses),
            q_min,
            q_max,
            vec![0.0; days],
            days,
            1.0,
            GammaSpec::Auto,
            vec![event],
        )
        .unwrap();
        agents.push(agent);
        let count = r.random_range(1..=3usize);
        let scenarios: Vec<Scenario> = {
            let mut fails: Vec<Day> = (1..=days + 1).collect();
            for i in 0..count.min(fails.len()) {
                let j = r.random_range(i..fails.len());
                fails.swap(i, j);
            }
            fails.truncate(count);
            fails.sort_unstable();
            let raw: Vec<f64> = fails.iter().map(|_| r.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            fails
                .iter()
                .zip(&raw)
                .map(|(&fail_time, &p)| Scenario {
                    fail_time,
                    prob: p / total,
                })
                .collect()
        };
        sets.push(vec![ScenarioSet {
            agent: id,
            event: 0,
            detect_time: 1,
            horizon_end: days + 1,
            scenarios,
            clamped_mass: 0.0,
        }]);
        let start = r.random_range(1..=days);
        let len = r.random_range(1..=days - start + 1);
        bids.push((1..=days).map(|t| t >= start && t < start + len).collect());
    }
    let capacity: f64 = agents.iter().map(|a| a.q_max).sum();
    let load: Vec<f64> = (0..days).map(|_| r.random_range(0.2..0.9) * capacity).collect();
    let net = random_network(r, buses, days, &load, capacity);
    let net = with_units(&net, &agents);
    TsoInstance {
        net,
        agents,
        book: ScenarioBook { sets },
        bids,
    }
}

pub fn weight_oracle(set: &ScenarioSet, t: Day, eps: f64) -> f64 {
    let mut w = 0.0;
    for s in &set.scenarios {
        let gap = s.fail_time as f64 - t as f64;
        if gap >= 0.0 {
            w += s.prob / (gap + eps);
        }
    }
    w
}

/// Direct DC dispatch check with `out[n]` units forced off and commitment
/// `u`: angles, injections, balance rows and flow limits in one LP.
pub fn dispatch_feasible(net: &NetworkModel, agents: &[AgentProfile], t: Day, out: &[bool], u: &[bool]) -> bool {
    let mut lp = LpProblem::new();
    let theta: Vec<usize> = (0..net.buses.len())
        .map(|j| {
            if j == 0 {
                lp.add_var(0.0, 0.0, 0.0)
            } else {
                lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0)
            }
        })
        .collect();
    let q: Vec<usize> = agents
        .iter()
        .enumerate()
        .map(|(n, a)| {
            if out[n] || !u[n] {
                lp.add_var(0.0, 0.0, 0.0)
            } else {
                lp.add_var(a.q_min, a.q_max, 0.0)
            }
        })
        .collect();
    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.buses.len()];
    for (n, a) in agents.iter().enumerate() {
        balance[net.bus_index(a.bus).unwrap()].push((q[n], 1.0));
    }
    for l in &net.lines {
        let f = net.bus_index(l.from).unwrap();
        let to = net.bus_index(l.to).unwrap();
        let k = l.susceptance * net.base_mva;
        lp.add_row(
            vec![(theta[f], k), (theta[to], -k)],
            RowKind::Range(-l.capacity, l.capacity),
        );
        balance[f].extend([(theta[f], -k), (theta[to], k)]);
        balance[to].extend([(theta[to], -k), (theta[f], k)]);
    }
    for (j, row) in balance.into_iter().enumerate() {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (v, c) in row {
            *merged.entry(v).or_default() += c;
        }
        lp.add_row(merged.into_iter().collect(), RowKind::Eq(net.load_at(j, t)));
    }
    matches!(lp.solve(&SimplexOptions::default()).unwrap(), LpOutcome::Optimal(_))
}

/// Exists a commitment making the outage set feasible.
pub fn outage_feasible(net: &NetworkModel, agents: &[AgentProfile], t: Day, out: &[bool]) -> bool {
    let n = agents.len();
    (0..1u32 << n).any(|m| {
        let u: Vec<bool> = (0..n).map(|i| m >> i & 1 == 1).collect();
        dispatch_feasible(net, agents, t, out, &u)
    })
}

/// Maximum of the acceptance objective over every `y <= x` lattice whose
/// every day is feasible. `None` when no lattice is feasible.
pub fn tso_brute_force(inst: &TsoInstance, eps: f64) -> Option<f64> {
    let n = inst.agents.len();
    let days = inst.bids[0].len();
    let cells: Vec<(usize, Day)> = (0..n)
        .flat_map(|a| (1..=days).map(move |t| (a, t)))
        .filter(|&(a, t)| inst.bids[a][t - 1])
        .collect();
    let mut memo: HashMap<(Day, Vec<bool>), bool> = HashMap::new();
    let mut best: Option<f64> = None;
    for mask in 0u64..(1u64 << cells.len()) {
        let mut y = vec![vec![false; days]; n];
        for (k, &(a, t)) in cells.iter().enumerate() {
            y[a][t - 1] = mask >> k & 1 == 1;
        }
        let ok = (1..=days).all(|t| {
            let out: Vec<bool> = (0..n).map(|a| y[a][t - 1]).collect();
            *memo
                .entry((t, out.clone()))
                .or_insert_with(|| outage_feasible(&inst.net, &inst.agents, t, &out))
        });
        if !ok {
            continue;
        }
        let value: f64 = cells
            .iter()
            .filter(|&&(a, t)| y[a][t - 1])
            .map(|&(a, t)| weight_oracle(&inst.book.sets[a][0], t, eps))
            .sum();
        if best.is_none_or(|b| value > b) {
            best = Some(value);
        }
    }
    best
}

// ------------------------------------------------------------ negotiation

pub struct MarketInstance {
    pub agents: Vec<AgentProfile>,
    pub net: NetworkModel,
    pub grid: TimeGrid,
    pub book: ScenarioBook,
}

/// Small market satisfying both modelling assumptions: every single
/// outage is network-feasible on every day, and failures come no sooner
/// than `N · r` days after detection. Overlapping windows make
/// simultaneous outages compete. `None` if the draw misses the family.
#[allow(clippy::approx_constant)]
pub fn random_market(seed: u64) -> Option<MarketInstance> {
    let mut r = rng(seed);
    let n = r.random_range(3..=5usize);
    let buses = r.random_range(2..=4usize);
    let repair = r.random_range(1..=2usize);
    let gap = n * repair;
    let mut agents = Vec::new();
    let mut days = 0;
    for id in 1..=n {
        let events = r.random_range(1..=2usize);
        let mut thresholds = Vec::new();
        let mut t = r.random_range(1..=6usize);
        for _ in 0..events {
            let sigma: f64 = r.random_range(0.5..2.0);
            let tau = t + gap + 1 + (4.0 * sigma).ceil() as usize + r.random_range(0..6usize);
            thresholds.push((t, tau, sigma));
            t = tau + (4.0 * sigma).ceil() as usize + r.random_range(2..8usize);
        }
        let events = gmsneg::domain::default_horizons(&thresholds).ok()?;
        days = days.max(events.last().unwrap().horizon_end);
        let q_max = r.random_range(50.0..150.0);
        agents.push((id, r.random_range(1..=buses), q_max, r.random_range(5.0..15.0), events));
    }
    let capacity: f64 = agents.iter().map(|a| a.2).sum();
    let largest = agents.iter().map(|a| a.2).fold(0.0, f64::max);
    let second = agents
        .iter()
        .map(|a| a.2)
        .fold((0.0f64, 0.0f64), |(a, b), q| if q > a { (q, a) } else { (a, b.max(q)) })
        .1;
    // peak load sits between "one unit out" and "the two largest out"
    let peak = capacity - largest - r.random_range(0.0..0.8) * second;
    let load: Vec<f64> = (0..days)
        .map(|t| peak * (0.85 + 0.15 * (t as f64 / days as f64 * 6.28).cos().abs()))
        .collect();
    let agents: Vec<AgentProfile> = agents
        .into_iter()
        .map(|(id, bus, q_max, c, events)| {
            let g = events.iter().map(|e| e.horizon_end - e.detect_time).max().unwrap();
            AgentProfile::new(
                id,
                bus,
                0.0,
                q_max,
                vec![c * q_max; days],
                repair,
                1e3 * (-(g as f64)).exp(),
                GammaSpec::Auto,
                events,
            )
            .unwrap()
        })
        .collect();
    let net = random_network(&mut r, buses, days, &load, 4.0 * capacity);
    let net = with_units(&net, &agents);
    let grid = TimeGrid::new(days).ok()?;
    let book = ScenarioBook::build(&agents, 20, seed, SamplingScheme::MonteCarlo).ok()?;
    let report = validate_inputs(&agents, &net, &grid, &book).ok()?;
    if !report.all_passed() {
        return None;
    }
    for t in 1..=days {
        for a in &agents {
            if !dcopf_feasible(&net, &agents, &[a.id], t).ok()?.is_feasible() {
                return None;
            }
        }
    }
    Some(MarketInstance {
        agents,
        net,
        grid,
        book,
    })
}
