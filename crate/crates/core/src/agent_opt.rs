//! Per-agent maintenance-slot optimization.
//!
//! Within one fault horizon the agent earns a per-day value
//!
//! ```text
//! v(t) = alive(t) · (P(t) q(t) − C(t)) − deterioration(t)
//! ```
//!
//! on every day it does not spend in maintenance, and pays the incentive
//! coefficient on every day it does. Horizons are independent and the
//! admissible set per horizon is one contiguous block of `1..=r` days, so
//! the exact optimum is found by scoring every `(start, length)` pair.

use serde::{Deserialize, Serialize};

use crate::domain::{sign, AgentProfile, Day, FaultEvent, GammaSpec};
use crate::error::{Error, Result};
use crate::scenarios::{expected_indicator_alive, ScenarioSet};

/// Safety margin applied on top of the penalty lower bound when
/// `gamma = auto`.
pub const GAMMA_MARGIN: f64 = 0.01;

/// How the scenario expectation enters the fault-progression penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeteriorationForm {
    /// `Σ_s α e^{t−t1} (sign(t−t1) − π_s sign(t−t2_s))`: the scenario
    /// weight multiplies only the failure term and the detection term is
    /// summed once per scenario.
    #[default]
    AsPrinted,
    /// `α e^{t−t1} (sign(t−t1) − Σ_s π_s sign(t−t2_s))`, the plain
    /// expectation of the bracket.
    Expectation,
}

impl std::fmt::Display for DeteriorationForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AsPrinted => "as-printed",
            Self::Expectation => "expectation",
        })
    }
}

impl std::str::FromStr for DeteriorationForm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "as-printed" => Ok(Self::AsPrinted),
            "expectation" => Ok(Self::Expectation),
            other => Err(format!("unknown deterioration form `{other}`")),
        }
    }
}

/// Exogenous market series seen by one agent, indexed by `t - 1`.
#[derive(Clone, Copy, Debug)]
pub struct MarketView<'a> {
    pub price: &'a [f64],
    /// Anticipated sale quantity per day.
    pub dispatch: &'a [f64],
}

impl MarketView<'_> {
    pub fn profit(&self, profile: &AgentProfile, t: Day) -> f64 {
        self.price[t - 1] * self.dispatch[t - 1] - profile.cost(t)
    }
}

pub fn deterioration_rate(
    profile: &AgentProfile,
    event: &FaultEvent,
    set: &ScenarioSet,
    t: Day,
    form: DeteriorationForm,
) -> f64 {
    let growth = profile.alpha * (t as f64 - event.detect_time as f64).exp();
    let detect = sign(t as f64 - event.detect_time as f64) as f64;
    let fail = |s: &crate::scenarios::Scenario| s.prob * sign(t as f64 - s.fail_time as f64) as f64;
    match form {
        DeteriorationForm::AsPrinted => set.scenarios.iter().map(|s| growth * (detect - fail(s))).sum(),
        DeteriorationForm::Expectation => growth * (detect - set.scenarios.iter().map(fail).sum::<f64>()),
    }
}

/// Per-day value of staying online at `t`.
pub fn step_value(
    profile: &AgentProfile,
    event: &FaultEvent,
    set: &ScenarioSet,
    market: &MarketView<'_>,
    t: Day,
    form: DeteriorationForm,
) -> f64 {
    expected_indicator_alive(set, t) * market.profit(profile, t) - deterioration_rate(profile, event, set, t, form)
}

/// Expected fault-progression cost over one horizon. `x[i]` is the
/// maintenance flag for day `horizon_start + i`.
pub fn deterioration_cost(
    profile: &AgentProfile,
    event: &FaultEvent,
    set: &ScenarioSet,
    x: &[bool],
    form: DeteriorationForm,
) -> f64 {
    debug_assert_eq!(x.len(), event.horizon_len());
    event
        .horizon()
        .zip(x)
        .filter(|(_, &m)| !m)
        .map(|(t, _)| deterioration_rate(profile, event, set, t, form))
        .sum()
}

/// Expected market reward over one horizon, same indexing as
/// [`deterioration_cost`].
pub fn expected_reward(
    profile: &AgentProfile,
    event: &FaultEvent,
    set: &ScenarioSet,
    x: &[bool],
    market: &MarketView<'_>,
) -> f64 {
    debug_assert_eq!(x.len(), event.horizon_len());
    event
        .horizon()
        .zip(x)
        .filter(|(_, &m)| !m)
        .map(|(t, _)| expected_indicator_alive(set, t) * market.profit(profile, t))
        .sum()
}

/// Smallest penalty that makes any single day unattractive for
/// maintenance: `max(0, max_t −v(t))` over all of the agent's horizons.
pub fn gamma_bound(
    profile: &AgentProfile,
    sets: &[ScenarioSet],
    market: &MarketView<'_>,
    form: DeteriorationForm,
) -> f64 {
    profile
        .fault_events
        .iter()
        .zip(sets)
        .flat_map(|(e, set)| e.horizon().map(move |t| -step_value(profile, e, set, market, t, form)))
        .fold(0.0, f64::max)
}

/// Penalty weight used in negotiation: the fixed value, or the bound
/// plus [`GAMMA_MARGIN`] for `auto`.
pub fn resolve_gamma(
    profile: &AgentProfile,
    sets: &[ScenarioSet],
    market: &MarketView<'_>,
    form: DeteriorationForm,
) -> f64 {
    match profile.gamma {
        GammaSpec::Fixed(g) => g,
        GammaSpec::Auto => gamma_bound(profile, sets, market, form) * (1.0 + GAMMA_MARGIN),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub start: Day,
    pub len: usize,
}

impl Block {
    pub fn end(&self) -> Day {
        self.start + self.len - 1
    }

    pub fn days(&self) -> std::ops::RangeInclusive<Day> {
        self.start..=self.end()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentDecision {
    pub agent: usize,
    pub iteration: usize,
    /// Maintenance flags over the whole grid, `x[t - 1]`.
    pub x: Vec<bool>,
    /// One block per fault event, in event order.
    pub blocks: Vec<Block>,
    pub objective_value: f64,
    pub reward_component: f64,
    pub deterioration_component: f64,
    pub incentive_component: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ScheduleValue {
    pub reward: f64,
    pub deterioration: f64,
    pub incentive: f64,
}

impl ScheduleValue {
    pub fn objective(&self) -> f64 {
        self.reward - self.deterioration + self.incentive
    }
}

/// Objective decomposition of an arbitrary grid-wide schedule `x`, with
/// `incentive[t - 1]` charged on every maintenance day.
pub fn evaluate_schedule(
    profile: &AgentProfile,
    sets: &[ScenarioSet],
    market: &MarketView<'_>,
    x: &[bool],
    incentive: &[f64],
    form: DeteriorationForm,
) -> ScheduleValue {
    let mut value = ScheduleValue::default();
    for (e, set) in profile.fault_events.iter().zip(sets) {
        let lo = e.horizon_start - 1;
        let hx = &x[lo..e.horizon_end];
        value.reward += expected_reward(profile, e, set, hx, market);
        value.deterioration += deterioration_cost(profile, e, set, hx, form);
    }
    value.incentive = x.iter().zip(incentive).filter(|(&m, _)| m).map(|(_, &c)| c).sum();
    value
}

/// Exact maximizer of the agent objective with per-day incentive
/// coefficients `incentive[t - 1]` (non-positive, zero where never
/// rejected). Ties go to the earliest start, then the shortest block.
pub fn solve_agent(
    profile: &AgentProfile,
    sets: &[ScenarioSet],
    market: &MarketView<'_>,
    incentive: &[f64],
    iteration: usize,
    form: DeteriorationForm,
) -> Result<AgentDecision> {
    let days = incentive.len();
    let mut x = vec![false; days];
    let mut blocks = Vec::with_capacity(profile.fault_events.len());
    for (k, (e, set)) in profile.fault_events.iter().zip(sets).enumerate() {
        if e.horizon_start > e.horizon_end || e.horizon_end > days {
            return Err(Error::AgentInfeasible {
                agent: profile.id,
                event: k,
            });
        }
        let values: Vec<f64> = e
            .horizon()
            .map(|t| step_value(profile, e, set, market, t, form))
            .collect();
        let max_len = profile.repair_time.min(e.horizon_len());
        let mut best: Option<(f64, Block)> = None;
        for start in e.horizon() {
            let mut score = 0.0;
            for len in 1..=max_len {
                let t = start + len - 1;
                if t > e.horizon_end {
                    break;
                }
                score += incentive[t - 1] - values[t - e.horizon_start];
                if best.is_none_or(|(b, _)| score > b) {
                    best = Some((score, Block { start, len }));
                }
            }
        }
        let (_, block) = best.ok_or(Error::AgentInfeasible {
            agent: profile.id,
            event: k,
        })?;
        for t in block.days() {
            x[t - 1] = true;
        }
        blocks.push(block);
    }
    let value = evaluate_schedule(profile, sets, market, &x, incentive, form);
    Ok(AgentDecision {
        agent: profile.id,
        iteration,
        x,
        blocks,
        objective_value: value.objective(),
        reward_component: value.reward,
        deterioration_component: value.deterioration,
        incentive_component: value.incentive,
    })
}
