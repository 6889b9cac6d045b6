//! Discretization of a fault event's random failure day into a finite,
//! probability-weighted scenario set.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::{sign, AgentProfile, Day, FaultEvent};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingScheme {
    /// `S` independent normal draws, each carrying mass `1/S`.
    #[default]
    MonteCarlo,
    /// Midpoint quantiles `(s + 1/2) / S` of the normal distribution.
    Stratified,
}

impl std::fmt::Display for SamplingScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::MonteCarlo => "monte-carlo",
            Self::Stratified => "stratified",
        })
    }
}

impl std::str::FromStr for SamplingScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "monte-carlo" => Ok(Self::MonteCarlo),
            "stratified" => Ok(Self::Stratified),
            other => Err(format!("unknown sampling scheme `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub fail_time: Day,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSet {
    pub agent: usize,
    pub event: usize,
    pub detect_time: Day,
    pub horizon_end: Day,
    /// Sorted by `fail_time`, which is distinct across entries.
    pub scenarios: Vec<Scenario>,
    /// Probability mass moved onto a window boundary by clamping.
    pub clamped_mass: f64,
}

impl ScenarioSet {
    pub fn tagged(mut self, agent: usize, event: usize) -> Self {
        self.agent = agent;
        self.event = event;
        self
    }

    pub fn mean(&self) -> f64 {
        self.scenarios.iter().map(|s| s.prob * s.fail_time as f64).sum()
    }

    pub fn earliest(&self) -> Day {
        self.scenarios[0].fail_time
    }

    pub fn latest(&self) -> Day {
        self.scenarios[self.scenarios.len() - 1].fail_time
    }

    /// Smallest failure day whose cumulative mass reaches one half.
    pub fn median(&self) -> Day {
        let mut acc = 0.0;
        for s in &self.scenarios {
            acc += s.prob;
            if acc >= 0.5 - 1e-12 {
                return s.fail_time;
            }
        }
        self.latest()
    }

    pub fn check_invariants(&self, event: &FaultEvent) -> std::result::Result<(), String> {
        if self.scenarios.is_empty() {
            return Err(format!("event {}: empty scenario set", self.event));
        }
        let total: f64 = self.scenarios.iter().map(|s| s.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("event {}: probabilities sum to {total}", self.event));
        }
        for w in self.scenarios.windows(2) {
            if w[0].fail_time >= w[1].fail_time {
                return Err(format!("event {}: failure days not strictly ascending", self.event));
            }
        }
        if self.earliest() <= event.detect_time || self.latest() > event.horizon_end {
            return Err(format!(
                "event {}: failure days escape ({}, {}]",
                self.event, event.detect_time, event.horizon_end
            ));
        }
        Ok(())
    }
}

/// Samples `count` failure days for `event`, rounds them to whole days,
/// clamps them into `(t1, horizon_end]` and merges duplicates.
pub fn sample_scenarios(event: &FaultEvent, count: usize, seed: u64, scheme: SamplingScheme) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(Error::InvalidInput("scenario count must be >= 1".into()));
    }
    let lo = event.detect_time + 1;
    let hi = event.horizon_end;
    if event.rul_std > 0.0 && hi <= lo {
        return Err(Error::DegenerateWindow {
            agent: 0,
            event: 0,
            detect: event.detect_time,
            end: hi,
        });
    }

    let standard: Vec<f64> = if event.rul_std == 0.0 {
        vec![0.0; count]
    } else {
        match scheme {
            SamplingScheme::MonteCarlo => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
            }
            SamplingScheme::Stratified => {
                let normal = Normal::standard();
                (0..count)
                    .map(|s| normal.inverse_cdf((s as f64 + 0.5) / count as f64))
                    .collect()
            }
        }
    };

    let mut counts: BTreeMap<Day, usize> = BTreeMap::new();
    let mut clamped = 0usize;
    for z in standard {
        let raw = (event.rul_mean as f64 + event.rul_std * z).round();
        let day = if raw < lo as f64 {
            clamped += 1;
            lo
        } else if raw > hi as f64 {
            clamped += 1;
            hi
        } else {
            raw as Day
        };
        *counts.entry(day).or_default() += 1;
    }

    let scenarios = counts
        .into_iter()
        .map(|(fail_time, c)| Scenario {
            fail_time,
            prob: c as f64 / count as f64,
        })
        .collect();
    Ok(ScenarioSet {
        agent: 0,
        event: 0,
        detect_time: event.detect_time,
        horizon_end: event.horizon_end,
        scenarios,
        clamped_mass: clamped as f64 / count as f64,
    })
}

/// `sum_s pi_s * (1 - sign(t - t2_s)) / 2`: mass of scenarios still alive
/// at `t`, with the failure day itself counted at half weight.
pub fn expected_indicator_alive(set: &ScenarioSet, t: Day) -> f64 {
    set.scenarios
        .iter()
        .map(|s| s.prob * 0.5 * (1 - sign(t as f64 - s.fail_time as f64)) as f64)
        .sum()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-event seed so every (agent, event) stream is independent of the
/// order in which sets are generated.
pub fn derive_seed(seed: u64, agent: usize, event: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((agent as u64) << 32) | event as u64))
}

/// Scenario sets for every agent and fault event, indexed like the agent
/// list: `sets[agent_index][event_index]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioBook {
    pub sets: Vec<Vec<ScenarioSet>>,
}

impl ScenarioBook {
    pub fn build(agents: &[AgentProfile], count: usize, seed: u64, scheme: SamplingScheme) -> Result<Self> {
        let sets = agents
            .par_iter()
            .map(|a| {
                a.fault_events
                    .iter()
                    .enumerate()
                    .map(|(k, e)| {
                        sample_scenarios(e, count, derive_seed(seed, a.id, k), scheme)
                            .map(|s| s.tagged(a.id, k))
                            .map_err(|err| match err {
                                Error::DegenerateWindow { detect, end, .. } => Error::DegenerateWindow {
                                    agent: a.id,
                                    event: k,
                                    detect,
                                    end,
                                },
                                other => other,
                            })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { sets })
    }

    /// Scenario set governing day `t` for agent index `n`, if any.
    pub fn set_for(&self, agent: &AgentProfile, n: usize, t: Day) -> Option<&ScenarioSet> {
        agent.event_at(t).map(|k| &self.sets[n][k])
    }

    pub fn total_clamped_mass(&self) -> f64 {
        self.sets.iter().flatten().map(|s| s.clamped_mass).sum()
    }
}
