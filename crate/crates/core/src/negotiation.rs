//! Round-based negotiation between the agents and the central system.
//!
//! Each round every agent bids its best maintenance blocks given the
//! penalties accumulated so far, the central system accepts or rejects
//! them, and every `(agent, day)` that has ever been rejected carries a
//! penalty of `−γ` from then on. The loop stops when a round's bids are
//! accepted in full.

use rayon::prelude::*;
use serde::Serialize;

use crate::agent_opt::{
    evaluate_schedule, resolve_gamma, solve_agent, AgentDecision, Block, DeteriorationForm, MarketView,
};
use crate::domain::{sign, AgentProfile, Day, NetworkModel};
use crate::error::{Error, Result};
use crate::scenarios::ScenarioBook;
use crate::tso_opt::{solve_tso, FeasibilityCache, TsoOptions, TsoSolution};

pub const DEFAULT_MAX_ITERATIONS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegotiationConfig {
    pub max_iterations: usize,
    pub tso: TsoOptions,
    pub form: DeteriorationForm,
    /// Anticipated sale quantity `dispatch[n][t - 1]`; `None` offers full
    /// capacity on every day.
    #[serde(skip)]
    pub dispatch: Option<Vec<Vec<f64>>>,
}

impl Default for NegotiationConfig {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tso: TsoOptions::default(),
            form: DeteriorationForm::default(),
            dispatch: None,
        }
    }
}

/// One completed round. Lattices are `agent × day`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationSnapshot {
    pub iteration: usize,
    pub bids: Vec<Vec<bool>>,
    pub accepted: Vec<Vec<bool>>,
    pub decisions: Vec<AgentDecision>,
    #[serde(skip)]
    pub tso: TsoSolution,
    /// Penalty coefficients the agents optimized against this round.
    pub penalties: Vec<Vec<f64>>,
}

impl IterationSnapshot {
    pub fn agreed(&self) -> bool {
        self.bids == self.accepted
    }
}

/// Settled incentives: `entries[i][n][t - 1]` is the signal charged to
/// agent `n` for its round-`i + 1` bid once that round's acceptances are
/// known.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IncentiveLedger {
    pub entries: Vec<Vec<Vec<f64>>>,
}

impl IncentiveLedger {
    pub fn agent_total(&self, iteration: usize, n: usize) -> f64 {
        self.entries[iteration - 1][n].iter().sum()
    }

    pub fn iteration_sum(&self, iteration: usize) -> f64 {
        self.entries[iteration - 1].iter().flatten().sum()
    }

    pub fn sums(&self) -> Vec<f64> {
        (1..=self.entries.len()).map(|i| self.iteration_sum(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NegotiationState {
    pub agent_ids: Vec<usize>,
    pub gamma: Vec<f64>,
    pub iterations: Vec<IterationSnapshot>,
    pub ledger: IncentiveLedger,
    /// `realized[i][n]`: reward minus deterioration of the round's bid
    /// plus its settled incentive.
    pub realized: Vec<Vec<f64>>,
    pub converged: bool,
}

impl NegotiationState {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }

    pub fn last(&self) -> Option<&IterationSnapshot> {
        self.iterations.last()
    }

    /// Agents (indices) rejected on at least one day in some round.
    pub fn penalized(&self) -> Vec<usize> {
        (0..self.agent_ids.len())
            .filter(|&n| self.iterations.iter().any(|s| s.bids[n] != s.accepted[n]))
            .collect()
    }
}

/// `γ · x · sign(Σ_o (y_o(t) − x_o(t)))` over the given history.
pub fn incentive_signal(history: &[IterationSnapshot], gamma: f64, n: usize, t: Day, x_current: bool) -> f64 {
    if !x_current {
        return 0.0;
    }
    let balance: i64 = history
        .iter()
        .map(|s| s.accepted[n][t - 1] as i64 - s.bids[n][t - 1] as i64)
        .sum();
    gamma * sign(balance as f64) as f64
}

fn penalty_vector(history: &[IterationSnapshot], gamma: f64, n: usize, days: usize) -> Vec<f64> {
    (1..=days)
        .map(|t| incentive_signal(history, gamma, n, t, true))
        .collect()
}

/// Anticipated dispatch per agent: the supplied series or `q_max`.
pub fn dispatch_series(agents: &[AgentProfile], days: usize, config: &NegotiationConfig) -> Result<Vec<Vec<f64>>> {
    match &config.dispatch {
        Some(d) => {
            if d.len() != agents.len() || d.iter().any(|s| s.len() < days) {
                return Err(Error::InvalidInput(
                    "dispatch series do not cover every agent and day".into(),
                ));
            }
            Ok(d.clone())
        }
        None => Ok(agents.iter().map(|a| vec![a.q_max; days]).collect()),
    }
}

/// Penalty weight per agent, resolving `auto` against the market view.
pub fn resolve_gammas(
    agents: &[AgentProfile],
    net: &NetworkModel,
    scenarios: &ScenarioBook,
    dispatch: &[Vec<f64>],
    form: DeteriorationForm,
) -> Vec<f64> {
    agents
        .iter()
        .zip(&scenarios.sets)
        .zip(dispatch)
        .map(|((a, sets), d)| {
            let m = MarketView {
                price: &net.price,
                dispatch: d,
            };
            resolve_gamma(a, sets, &m, form)
        })
        .collect()
}

/// Runs rounds until the bids are accepted in full or the iteration cap
/// is reached; either way the full history is returned.
pub fn run_negotiation(
    agents: &[AgentProfile],
    net: &NetworkModel,
    days: usize,
    scenarios: &ScenarioBook,
    config: &NegotiationConfig,
) -> Result<NegotiationState> {
    if config.max_iterations == 0 {
        return Err(Error::Config("iteration cap must be at least 1".into()));
    }
    if days > net.days() {
        return Err(Error::IndexOutOfRange(format!(
            "grid of {days} days exceeds network series"
        )));
    }
    let dispatch = dispatch_series(agents, days, config)?;
    let gamma = resolve_gammas(agents, net, scenarios, &dispatch, config.form);
    let cache = FeasibilityCache::new();
    let mut state = NegotiationState {
        agent_ids: agents.iter().map(|a| a.id).collect(),
        gamma: gamma.clone(),
        iterations: Vec::new(),
        ledger: IncentiveLedger::default(),
        realized: Vec::new(),
        converged: false,
    };
    for iteration in 1..=config.max_iterations {
        let penalties: Vec<Vec<f64>> = (0..agents.len())
            .map(|n| penalty_vector(&state.iterations, gamma[n], n, days))
            .collect();
        let decisions = agents
            .par_iter()
            .enumerate()
            .map(|(n, a)| {
                let m = MarketView {
                    price: &net.price,
                    dispatch: &dispatch[n],
                };
                solve_agent(a, &scenarios.sets[n], &m, &penalties[n], iteration, config.form)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let bids: Vec<Vec<bool>> = decisions.iter().map(|d| d.x.clone()).collect();
        let tso = solve_tso(net, agents, &bids, scenarios, &config.tso, &cache)?;
        let snapshot = IterationSnapshot {
            iteration,
            bids,
            accepted: tso.y.clone(),
            decisions,
            tso,
            penalties,
        };
        let agreed = snapshot.agreed();
        state.iterations.push(snapshot);

        let settled: Vec<Vec<f64>> = (0..agents.len())
            .map(|n| {
                let x = &state.iterations[iteration - 1].bids[n];
                (1..=days)
                    .map(|t| incentive_signal(&state.iterations, gamma[n], n, t, x[t - 1]))
                    .collect()
            })
            .collect();
        let realized = agents
            .iter()
            .enumerate()
            .map(|(n, a)| {
                let m = MarketView {
                    price: &net.price,
                    dispatch: &dispatch[n],
                };
                let x = &state.iterations[iteration - 1].bids[n];
                let v = evaluate_schedule(a, &scenarios.sets[n], &m, x, &vec![0.0; days], config.form);
                v.objective() + settled[n].iter().sum::<f64>()
            })
            .collect();
        state.ledger.entries.push(settled);
        state.realized.push(realized);
        if agreed {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BudgetReport {
    pub sums: Vec<f64>,
    /// Every ledger entry and every round sum is at most zero.
    pub weakly_balanced: bool,
    /// The converged round settles to exactly zero (vacuous if capped).
    pub balanced_at_convergence: bool,
    pub violations: Vec<String>,
}

impl BudgetReport {
    pub fn passed(&self) -> bool {
        self.weakly_balanced && self.balanced_at_convergence
    }
}

pub fn audit_budget_balance(state: &NegotiationState) -> BudgetReport {
    let sums = state.ledger.sums();
    let mut violations = Vec::new();
    for (i, round) in state.ledger.entries.iter().enumerate() {
        for (n, row) in round.iter().enumerate() {
            for (d, &v) in row.iter().enumerate() {
                if v > 0.0 {
                    violations.push(format!(
                        "iteration {} agent {} day {}: positive incentive {v}",
                        i + 1,
                        state.agent_ids[n],
                        d + 1
                    ));
                }
                if v != 0.0 && !state.iterations[i].bids[n][d] {
                    violations.push(format!(
                        "iteration {} agent {} day {}: incentive without a bid",
                        i + 1,
                        state.agent_ids[n],
                        d + 1
                    ));
                }
            }
        }
    }
    let weakly_balanced = violations.is_empty() && sums.iter().all(|&s| s <= 0.0);
    let balanced_at_convergence = !state.converged || sums.last() == Some(&0.0);
    if !balanced_at_convergence {
        violations.push(format!(
            "converged round settles to {} instead of 0",
            sums.last().unwrap()
        ));
    }
    BudgetReport {
        sums,
        weakly_balanced,
        balanced_at_convergence,
        violations,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentRationality {
    pub agent: usize,
    /// Optimized objective per round (with the penalties the agent faced).
    pub objective: Vec<f64>,
    /// Realized value per round (with the incentive actually settled).
    pub realized: Vec<f64>,
    pub penalized: bool,
    pub nondecreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RationalityReport {
    pub agents: Vec<AgentRationality>,
    /// `(agent id, iteration)` pairs with a negative objective.
    pub negative: Vec<(usize, usize)>,
}

pub fn audit_individual_rationality(state: &NegotiationState) -> RationalityReport {
    let penalized = state.penalized();
    let mut negative = Vec::new();
    let agents = state
        .agent_ids
        .iter()
        .enumerate()
        .map(|(n, &id)| {
            let objective: Vec<f64> = state
                .iterations
                .iter()
                .map(|s| s.decisions[n].objective_value)
                .collect();
            let realized: Vec<f64> = state.realized.iter().map(|r| r[n]).collect();
            for (i, &v) in objective.iter().enumerate() {
                if v < 0.0 {
                    negative.push((id, i + 1));
                }
            }
            AgentRationality {
                agent: id,
                nondecreasing: realized.windows(2).all(|w| w[1] >= w[0]),
                objective,
                realized,
                penalized: penalized.contains(&n),
            }
        })
        .collect();
    RationalityReport { agents, negative }
}

/// Per-agent summary of one round for the structured event log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentEvent {
    pub agent: usize,
    pub blocks: Vec<Block>,
    pub rejected_days: Vec<Day>,
    pub penalty_faced: f64,
    pub settled: f64,
    pub objective: f64,
    pub realized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationEvent {
    pub iteration: usize,
    pub agreed: bool,
    pub ledger_sum: f64,
    pub tso_objective: f64,
    pub agents: Vec<AgentEvent>,
}

pub fn event_log(state: &NegotiationState) -> Vec<IterationEvent> {
    state
        .iterations
        .iter()
        .enumerate()
        .map(|(i, s)| IterationEvent {
            iteration: s.iteration,
            agreed: s.agreed(),
            ledger_sum: state.ledger.iteration_sum(i + 1),
            tso_objective: s.tso.objective_value,
            agents: state
                .agent_ids
                .iter()
                .enumerate()
                .map(|(n, &id)| AgentEvent {
                    agent: id,
                    blocks: s.decisions[n].blocks.clone(),
                    rejected_days: (1..=s.bids[n].len())
                        .filter(|&t| s.bids[n][t - 1] && !s.accepted[n][t - 1])
                        .collect(),
                    penalty_faced: s.decisions[n].incentive_component,
                    settled: state.ledger.agent_total(i + 1, n),
                    objective: s.decisions[n].objective_value,
                    realized: state.realized[i][n],
                })
                .collect(),
        })
        .collect()
}

/// Repeat-bid check: every day that was penalized in a round is left
/// unbid in that round. Returns `(agent id, iteration, day)` violations.
pub fn penalty_violations(state: &NegotiationState) -> Vec<(usize, usize, Day)> {
    let mut out = Vec::new();
    for s in &state.iterations {
        for (n, row) in s.penalties.iter().enumerate() {
            for (d, &p) in row.iter().enumerate() {
                if p < 0.0 && s.bids[n][d] {
                    out.push((state.agent_ids[n], s.iteration, d + 1));
                }
            }
        }
    }
    out
}
