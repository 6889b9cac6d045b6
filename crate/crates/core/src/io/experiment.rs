//! Replication, baseline and sweep runs on top of a loaded dataset.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::agent_opt::{evaluate_schedule, Block, MarketView};
use crate::domain::{validate_inputs, AgentProfile, NetworkModel, TimeGrid, ValidationReport};
use crate::error::Result;
use crate::io::config::{ExperimentConfig, RunConfig};
use crate::io::dataset::Dataset;
use crate::io::ieee39;
use crate::negotiation::{
    audit_budget_balance, audit_individual_rationality, dispatch_series, run_negotiation, BudgetReport,
    NegotiationConfig, NegotiationState, RationalityReport,
};
use crate::scenarios::{SamplingScheme, ScenarioBook};
use crate::tso_opt::{solve_tso, FeasibilityCache};

/// Reads the configured tables (or generates the built-in case) and
/// applies the configured γ mode to every unit.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    let mut ds = match &config.data.dir {
        Some(dir) => Dataset::read_dir(dir, &config.data.files(), config.data.base_mva)?,
        None => ieee39::dataset()?,
    };
    for u in &mut ds.units {
        u.gamma = config.run.gamma.apply(u.gamma);
    }
    Ok(ds)
}

/// Typed model plus the scenario book of one run.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub agents: Vec<AgentProfile>,
    pub net: NetworkModel,
    pub grid: TimeGrid,
    pub scenarios: ScenarioBook,
}

impl Prepared {
    pub fn new(ds: &Dataset, count: usize, seed: u64, scheme: SamplingScheme) -> Result<Self> {
        let (agents, net, grid) = ds.build()?;
        let scenarios = ScenarioBook::build(&agents, count, seed, scheme)?;
        Ok(Self {
            agents,
            net,
            grid,
            scenarios,
        })
    }

    pub fn from_run(ds: &Dataset, run: &RunConfig) -> Result<Self> {
        Self::new(ds, run.scenarios, run.seed, run.sampling)
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        validate_inputs(&self.agents, &self.net, &self.grid, &self.scenarios)
    }

    pub fn negotiate(&self, config: &NegotiationConfig) -> Result<NegotiationState> {
        run_negotiation(&self.agents, &self.net, self.grid.len(), &self.scenarios, config)
    }

    /// Reward minus deterioration of `bids[n]` for every agent, without
    /// incentives.
    pub fn values(&self, bids: &[Vec<bool>], config: &NegotiationConfig) -> Result<Vec<(f64, f64)>> {
        let days = self.grid.len();
        let dispatch = dispatch_series(&self.agents, days, config)?;
        let zero = vec![0.0; days];
        Ok(self
            .agents
            .iter()
            .enumerate()
            .map(|(n, a)| {
                let m = MarketView {
                    price: &self.net.price,
                    dispatch: &dispatch[n],
                };
                let v = evaluate_schedule(a, &self.scenarios.sets[n], &m, &bids[n], &zero, config.form);
                (v.reward, v.deterioration)
            })
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct Replication {
    pub prepared: Prepared,
    pub negotiation: NegotiationConfig,
    pub validation: ValidationReport,
    pub state: NegotiationState,
    pub budget: BudgetReport,
    pub rationality: RationalityReport,
    /// Reward minus deterioration of the final bids, summed over agents.
    pub total_reward: f64,
}

impl Replication {
    pub fn audits_passed(&self) -> bool {
        self.budget.passed()
    }
}

pub fn run_replication(ds: &Dataset, run: &RunConfig) -> Result<Replication> {
    let prepared = Prepared::from_run(ds, run)?;
    let validation = prepared.validate()?;
    let config = run.negotiation();
    let state = prepared.negotiate(&config)?;
    let budget = audit_budget_balance(&state);
    let rationality = audit_individual_rationality(&state);
    let last = state.last().expect("at least one round runs");
    let total_reward = prepared.values(&last.bids, &config)?.iter().map(|(r, d)| r - d).sum();
    Ok(Replication {
        prepared,
        negotiation: config,
        validation,
        state,
        budget,
        rationality,
        total_reward,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Maintenance starts at fault detection.
    ConditionBased,
    /// Maintenance starts at the mean failure day.
    Corrective,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 2] = [BaselineKind::ConditionBased, BaselineKind::Corrective];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::ConditionBased => "condition-based",
            BaselineKind::Corrective => "corrective",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineRow {
    pub agent: usize,
    pub kind: BaselineKind,
    pub blocks: Vec<Block>,
    pub reward: f64,
    pub deterioration: f64,
    /// Days of this agent's schedule the central system would refuse.
    pub rejected_days: Vec<usize>,
}

impl BaselineRow {
    pub fn value(&self) -> f64 {
        self.reward - self.deterioration
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineReport {
    /// Grouped by kind, then agent order.
    pub rows: Vec<BaselineRow>,
}

impl BaselineReport {
    pub fn get(&self, kind: BaselineKind, agent: usize) -> Option<&BaselineRow> {
        self.rows.iter().find(|r| r.kind == kind && r.agent == agent)
    }
}

/// Fixed block of up to `r` days per event, starting at `anchor` clamped
/// into the horizon.
fn fixed_blocks(agent: &AgentProfile, kind: BaselineKind) -> Vec<Block> {
    agent
        .fault_events
        .iter()
        .map(|e| {
            let anchor = match kind {
                BaselineKind::ConditionBased => e.detect_time,
                BaselineKind::Corrective => e.rul_mean,
            };
            let start = anchor.clamp(e.horizon_start, e.horizon_end);
            Block {
                start,
                len: agent.repair_time.min(e.horizon_end - start + 1).max(1),
            }
        })
        .collect()
}

pub fn run_baselines(prepared: &Prepared, config: &NegotiationConfig) -> Result<BaselineReport> {
    let days = prepared.grid.len();
    let cache = FeasibilityCache::new();
    let mut rows = Vec::new();
    for kind in BaselineKind::ALL {
        let blocks: Vec<Vec<Block>> = prepared.agents.iter().map(|a| fixed_blocks(a, kind)).collect();
        let bids: Vec<Vec<bool>> = blocks
            .iter()
            .map(|bs| {
                let mut x = vec![false; days];
                for b in bs {
                    for t in b.days() {
                        x[t - 1] = true;
                    }
                }
                x
            })
            .collect();
        let values = prepared.values(&bids, config)?;
        let tso = solve_tso(
            &prepared.net,
            &prepared.agents,
            &bids,
            &prepared.scenarios,
            &config.tso,
            &cache,
        )?;
        for (n, a) in prepared.agents.iter().enumerate() {
            rows.push(BaselineRow {
                agent: a.id,
                kind,
                blocks: blocks[n].clone(),
                reward: values[n].0,
                deterioration: values[n].1,
                rejected_days: (1..=days).filter(|&t| bids[n][t - 1] && !tso.y[n][t - 1]).collect(),
            });
        }
    }
    Ok(BaselineReport { rows })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub scenarios: usize,
    pub iterations: usize,
    pub converged: bool,
    pub total_reward: f64,
    #[serde(skip)]
    pub wall: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    /// Band-major order, as configured.
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn get(&self, band: [f64; 2], scenarios: usize) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| [c.sigma_lo, c.sigma_hi] == band && c.scenarios == scenarios)
    }
}

/// One full negotiation per `(σ band, S)` pair. Every cell samples with
/// the same seed, so cells differ only by band and count.
pub fn run_sweep(ds: &Dataset, config: &ExperimentConfig) -> Result<SweepReport> {
    let pairs: Vec<([f64; 2], usize)> = config
        .sweep
        .sigma_ranges
        .iter()
        .flat_map(|&band| config.sweep.scenario_counts.iter().map(move |&s| (band, s)))
        .collect();
    let negotiation = config.run.negotiation();
    let cells = pairs
        .par_iter()
        .map(|&([lo, hi], count)| {
            let started = Instant::now();
            let banded = ds.with_sigma_range(lo, hi)?;
            let prepared = Prepared::new(&banded, count, config.run.seed, config.sweep.sampling)?;
            let state = prepared.negotiate(&negotiation)?;
            let last = state.last().expect("at least one round runs");
            let total_reward = prepared
                .values(&last.bids, &negotiation)?
                .iter()
                .map(|(r, d)| r - d)
                .sum();
            Ok(SweepCell {
                sigma_lo: lo,
                sigma_hi: hi,
                scenarios: count,
                iterations: state.iteration_count(),
                converged: state.converged,
                total_reward,
                wall: started.elapsed(),
            })
        })
        .collect::<Vec<Result<SweepCell>>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { cells })
}
