//! Core data types shared by every solver stage.
//!
//! Timesteps are 1-based days. Per-agent and per-bus series are stored
//! 0-based, so day `t` lives at index `t - 1`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenarios::ScenarioBook;

/// A 1-based day index.
pub type Day = usize;

/// Standard sign function with `sign(0) = 0`.
pub fn sign(v: f64) -> i32 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon_length: usize,
}

impl TimeGrid {
    pub fn new(horizon_length: usize) -> Result<Self> {
        if horizon_length == 0 {
            return Err(Error::InvalidInput("time grid must hold at least one day".into()));
        }
        Ok(Self { horizon_length })
    }

    pub fn len(&self) -> usize {
        self.horizon_length
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn days(&self) -> RangeInclusive<Day> {
        1..=self.horizon_length
    }

    pub fn contains(&self, t: Day) -> bool {
        (1..=self.horizon_length).contains(&t)
    }
}

/// One detected fault: detection day, RUL distribution and the window in
/// which its repair block must be placed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub detect_time: Day,
    pub rul_mean: Day,
    pub rul_std: f64,
    pub horizon_start: Day,
    pub horizon_end: Day,
}

impl FaultEvent {
    pub fn new(detect_time: Day, rul_mean: Day, rul_std: f64, horizon_start: Day, horizon_end: Day) -> Result<Self> {
        if !(rul_std.is_finite() && rul_std >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "rul_std must be finite and >= 0, got {rul_std}"
            )));
        }
        if horizon_start == 0 {
            return Err(Error::InvalidInput("days are 1-based; horizon_start = 0".into()));
        }
        if !(horizon_start <= detect_time && detect_time < rul_mean && rul_mean <= horizon_end) {
            return Err(Error::InvalidInput(format!(
                "fault event needs horizon_start <= t1 < tau <= horizon_end, got {horizon_start} <= {detect_time} < {rul_mean} <= {horizon_end}"
            )));
        }
        Ok(Self {
            detect_time,
            rul_mean,
            rul_std,
            horizon_start,
            horizon_end,
        })
    }

    pub fn horizon(&self) -> RangeInclusive<Day> {
        self.horizon_start..=self.horizon_end
    }

    pub fn horizon_len(&self) -> usize {
        self.horizon_end - self.horizon_start + 1
    }

    pub fn contains(&self, t: Day) -> bool {
        self.horizon().contains(&t)
    }
}

/// Builds fault events from `(t1, tau, sigma)` triples using the default
/// window rule: each window ends at `ceil(tau + 4 sigma)`, pulled back to
/// the day before the next detection when the two would overlap, and
/// starts the day after the previous window (day 1 for the first).
pub fn default_horizons(thresholds: &[(Day, Day, f64)]) -> Result<Vec<FaultEvent>> {
    let mut events = Vec::with_capacity(thresholds.len());
    let mut start = 1;
    for (k, &(t1, tau, sigma)) in thresholds.iter().enumerate() {
        let mut end = (tau as f64 + 4.0 * sigma).ceil() as Day;
        if let Some(&(next_t1, _, _)) = thresholds.get(k + 1) {
            end = end.min(next_t1.saturating_sub(1));
        }
        let event = FaultEvent::new(t1, tau, sigma, start, end)
            .map_err(|e| Error::InvalidInput(format!("event {k} (t1={t1}, tau={tau}, sigma={sigma}): {e}")))?;
        start = end + 1;
        events.push(event);
    }
    Ok(events)
}

/// Penalty weight for rejected bids, either fixed or derived from the
/// agent's own economics before negotiation starts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaSpec {
    Auto,
    Fixed(f64),
}

impl std::fmt::Display for GammaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaSpec::Auto => write!(f, "auto"),
            GammaSpec::Fixed(g) => write!(f, "{g}"),
        }
    }
}

impl std::str::FromStr for GammaSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(GammaSpec::Auto);
        }
        let g: f64 = s
            .parse()
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))?;
        if !(g.is_finite() && g > 0.0) {
            return Err(format!("gamma must be positive, got {g}"));
        }
        Ok(GammaSpec::Fixed(g))
    }
}

/// A generating unit and its maintenance economics.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentProfile {
    pub id: usize,
    pub bus: usize,
    pub q_min: f64,
    pub q_max: f64,
    /// Generation cost per day; index `t - 1`.
    pub gen_cost: Vec<f64>,
    pub repair_time: usize,
    pub alpha: f64,
    pub gamma: GammaSpec,
    pub fault_events: Vec<FaultEvent>,
}

impl AgentProfile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        bus: usize,
        q_min: f64,
        q_max: f64,
        gen_cost: Vec<f64>,
        repair_time: usize,
        alpha: f64,
        gamma: GammaSpec,
        fault_events: Vec<FaultEvent>,
    ) -> Result<Self> {
        if !(q_min.is_finite() && q_max.is_finite() && 0.0 <= q_min && q_min <= q_max) {
            return Err(Error::InvalidInput(format!(
                "agent {id}: need 0 <= q_min <= q_max, got q_min={q_min}, q_max={q_max}"
            )));
        }
        if repair_time == 0 {
            return Err(Error::InvalidInput(format!("agent {id}: repair_time must be >= 1")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidInput(format!(
                "agent {id}: alpha must be positive, got {alpha}"
            )));
        }
        if let GammaSpec::Fixed(g) = gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "agent {id}: gamma must be positive, got {g}"
                )));
            }
        }
        if gen_cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("agent {id}: non-finite generation cost")));
        }
        for pair in fault_events.windows(2) {
            if pair[0].horizon_end >= pair[1].horizon_start {
                return Err(Error::InvalidInput(format!(
                    "agent {id}: fault horizons overlap or are out of order ({}..={} then {}..={})",
                    pair[0].horizon_start, pair[0].horizon_end, pair[1].horizon_start, pair[1].horizon_end
                )));
            }
        }
        Ok(Self {
            id,
            bus,
            q_min,
            q_max,
            gen_cost,
            repair_time,
            alpha,
            gamma,
            fault_events,
        })
    }

    pub fn cost(&self, t: Day) -> f64 {
        self.gen_cost[t - 1]
    }

    /// Index of the fault event whose horizon contains `t`.
    pub fn event_at(&self, t: Day) -> Option<usize> {
        self.fault_events.iter().position(|e| e.contains(t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Per-unit susceptance on the network MVA base.
    pub susceptance: f64,
    /// Thermal limit in MW.
    pub capacity: f64,
}

/// Buses, lines and the exogenous nodal load and price series.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub base_mva: f64,
    pub buses: Vec<usize>,
    pub lines: Vec<Line>,
    /// Agent id to bus id.
    pub unit_map: BTreeMap<usize, usize>,
    /// `load[bus_index][t - 1]` in MW.
    pub load: Vec<Vec<f64>>,
    /// `price[t - 1]` in $/MW.
    pub price: Vec<f64>,
    index: HashMap<usize, usize>,
}

impl NetworkModel {
    pub fn new(
        base_mva: f64,
        buses: Vec<usize>,
        lines: Vec<Line>,
        unit_map: BTreeMap<usize, usize>,
        load: Vec<Vec<f64>>,
        price: Vec<f64>,
    ) -> Result<Self> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(Error::InvalidInput(format!(
                "base_mva must be positive, got {base_mva}"
            )));
        }
        if buses.is_empty() {
            return Err(Error::InvalidInput("network has no buses".into()));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (i, &b) in buses.iter().enumerate() {
            if index.insert(b, i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate bus id {b}")));
            }
        }
        for (l, line) in lines.iter().enumerate() {
            for end in [line.from, line.to] {
                if !index.contains_key(&end) {
                    return Err(Error::IndexOutOfRange(format!("line {l} references unknown bus {end}")));
                }
            }
            if line.from == line.to {
                return Err(Error::InvalidInput(format!(
                    "line {l} is a self-loop at bus {}",
                    line.from
                )));
            }
            if !(line.susceptance.is_finite() && line.susceptance > 0.0) {
                return Err(Error::InvalidInput(format!("line {l}: susceptance must be positive")));
            }
            if !(line.capacity.is_finite() && line.capacity > 0.0) {
                return Err(Error::InvalidInput(format!("line {l}: capacity must be positive")));
            }
        }
        for (agent, bus) in &unit_map {
            if !index.contains_key(bus) {
                return Err(Error::IndexOutOfRange(format!(
                    "agent {agent} mapped to unknown bus {bus}"
                )));
            }
        }
        if load.len() != buses.len() {
            return Err(Error::InvalidInput(format!(
                "load has {} bus series for {} buses",
                load.len(),
                buses.len()
            )));
        }
        for series in &load {
            if series.len() != price.len() {
                return Err(Error::InvalidInput("load and price series lengths differ".into()));
            }
            if series.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidInput("loads must be finite and non-negative".into()));
            }
        }
        let net = Self {
            base_mva,
            buses,
            lines,
            unit_map,
            load,
            price,
            index,
        };
        net.check_connected()?;
        Ok(net)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for line in &self.lines {
            let (a, b) = (self.index[&line.from], self.index[&line.to]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Disconnected(self.buses[i], self.buses[0])),
            None => Ok(()),
        }
    }

    pub fn bus_index(&self, bus: usize) -> Option<usize> {
        self.index.get(&bus).copied()
    }

    /// Number of days covered by the load and price series.
    pub fn days(&self) -> usize {
        self.price.len()
    }

    pub fn load_at(&self, bus_index: usize, t: Day) -> f64 {
        self.load[bus_index][t - 1]
    }

    pub fn system_load(&self, t: Day) -> f64 {
        self.load.iter().map(|series| series[t - 1]).sum()
    }

    pub fn price(&self, t: Day) -> f64 {
        self.price[t - 1]
    }
}

/// Decision lattices for one full schedule. Binary lattices are
/// `agent × day`, the angle lattice is `bus × day`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleMatrix {
    pub x: Vec<Vec<bool>>,
    pub y: Vec<Vec<bool>>,
    pub u: Vec<Vec<bool>>,
    pub q: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
}

impl ScheduleMatrix {
    pub fn zeros(agents: usize, buses: usize, days: usize) -> Self {
        Self {
            x: vec![vec![false; days]; agents],
            y: vec![vec![false; days]; agents],
            u: vec![vec![false; days]; agents],
            q: vec![vec![0.0; days]; agents],
            theta: vec![vec![0.0; days]; buses],
            z: vec![vec![0.0; days]; agents],
        }
    }

    /// Lists every violated lattice invariant (`y <= x`, commitment bounds
    /// on `q`, and `z = (1 - y) q`).
    pub fn lattice_violations(&self, agents: &[AgentProfile], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (n, agent) in agents.iter().enumerate() {
            for d in 0..self.x[n].len() {
                let t = d + 1;
                if self.y[n][d] && !self.x[n][d] {
                    out.push(format!("agent {} day {t}: y=1 without a bid", agent.id));
                }
                let u = if self.u[n][d] { 1.0 } else { 0.0 };
                let q = self.q[n][d];
                if q < u * agent.q_min - tol || q > u * agent.q_max + tol {
                    out.push(format!("agent {} day {t}: q={q} outside commitment bounds", agent.id));
                }
                let expect_z = if self.y[n][d] { 0.0 } else { q };
                if (self.z[n][d] - expect_z).abs() > tol {
                    out.push(format!(
                        "agent {} day {t}: z={} but (1-y)q={expect_z}",
                        agent.id, self.z[n][d]
                    ));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub passed: bool,
    pub detail: String,
}

/// Result of [`validate_inputs`]. Failed assumptions are warnings: the
/// engine still runs but convergence is no longer guaranteed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub assumption1: CheckOutcome,
    pub assumption2: CheckOutcome,
    pub structural: Vec<String>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.assumption1.passed && self.assumption2.passed && self.structural.is_empty()
    }
}

pub fn validate_inputs(
    agents: &[AgentProfile],
    net: &NetworkModel,
    grid: &TimeGrid,
    scenarios: &ScenarioBook,
) -> Result<ValidationReport> {
    if agents.is_empty() {
        return Err(Error::InvalidInput("no agents".into()));
    }
    if net.days() < grid.len() {
        return Err(Error::IndexOutOfRange(format!(
            "network series cover {} days but the grid has {}",
            net.days(),
            grid.len()
        )));
    }
    let mut ids = std::collections::BTreeSet::new();
    for a in agents {
        if !ids.insert(a.id) {
            return Err(Error::InvalidInput(format!("duplicate agent id {}", a.id)));
        }
        if a.q_min < 0.0 || a.q_max < a.q_min {
            return Err(Error::InvalidInput(format!(
                "agent {}: negative or inverted capacity",
                a.id
            )));
        }
        if net.bus_index(a.bus).is_none() {
            return Err(Error::IndexOutOfRange(format!(
                "agent {} sits on unknown bus {}",
                a.id, a.bus
            )));
        }
        if a.gen_cost.len() < grid.len() {
            return Err(Error::IndexOutOfRange(format!(
                "agent {}: cost series shorter than grid",
                a.id
            )));
        }
        for (k, e) in a.fault_events.iter().enumerate() {
            if !grid.contains(e.horizon_end) {
                return Err(Error::IndexOutOfRange(format!(
                    "agent {} event {k}: horizon end {} beyond grid of {} days",
                    a.id,
                    e.horizon_end,
                    grid.len()
                )));
            }
        }
    }
    if scenarios.sets.len() != agents.len() {
        return Err(Error::InvalidInput("scenario book does not match agent list".into()));
    }

    let mut structural = Vec::new();
    for (a, sets) in agents.iter().zip(&scenarios.sets) {
        if sets.len() != a.fault_events.len() {
            return Err(Error::InvalidInput(format!(
                "agent {}: scenario sets do not match events",
                a.id
            )));
        }
        if net.unit_map.get(&a.id) != Some(&a.bus) {
            structural.push(format!("agent {} bus {} disagrees with network unit map", a.id, a.bus));
        }
        for (e, set) in a.fault_events.iter().zip(sets) {
            if let Err(msg) = set.check_invariants(e) {
                structural.push(format!("agent {}: {msg}", a.id));
            }
        }
    }

    let total_cap: f64 = agents.iter().map(|a| a.q_max).sum();
    let max_unit = agents.iter().map(|a| a.q_max).fold(0.0, f64::max);
    let (peak_day, peak_load) = grid
        .days()
        .map(|t| (t, net.system_load(t)))
        .fold((1, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    if total_cap < peak_load {
        structural.push(format!(
            "system inadequate: total capacity {total_cap:.3} MW below peak load {peak_load:.3} MW on day {peak_day}"
        ));
    }

    let n_agents = agents.len();
    let max_repair = agents.iter().map(|a| a.repair_time).max().unwrap_or(1);
    let required = n_agents * max_repair;
    let mut min_gap: Option<(usize, usize, usize)> = None;
    for (a, sets) in agents.iter().zip(&scenarios.sets) {
        for (k, (e, set)) in a.fault_events.iter().zip(sets).enumerate() {
            for s in &set.scenarios {
                let gap = s.fail_time.saturating_sub(e.detect_time);
                if min_gap.is_none_or(|(g, _, _)| gap < g) {
                    min_gap = Some((gap, a.id, k));
                }
            }
        }
    }
    let assumption1 = match min_gap {
        Some((gap, id, k)) if gap < required => CheckOutcome {
            passed: false,
            detail: format!(
                "min t2 - t1 = {gap} (agent {id}, event {k}) < N * max r = {n_agents} * {max_repair} = {required}"
            ),
        },
        Some((gap, _, _)) => CheckOutcome {
            passed: true,
            detail: format!("min t2 - t1 = {gap} >= N * max r = {required}"),
        },
        None => CheckOutcome {
            passed: true,
            detail: "no fault events".into(),
        },
    };

    let remaining = total_cap - max_unit;
    let assumption2 = if remaining >= peak_load {
        CheckOutcome {
            passed: true,
            detail: format!("capacity without the largest unit {remaining:.3} MW >= peak load {peak_load:.3} MW"),
        }
    } else {
        CheckOutcome {
            passed: false,
            detail: format!(
                "capacity without the largest unit {remaining:.3} MW < load {peak_load:.3} MW on day {peak_day}"
            ),
        }
    };

    Ok(ValidationReport {
        assumption1,
        assumption2,
        structural,
    })
}
