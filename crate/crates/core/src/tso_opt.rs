//! Central acceptance problem.
//!
//! The objective is separable over `(agent, day)` and the network couples
//! units only within a day, so each day is solved on its own: pick the
//! subset of bidders to take offline that maximizes total acceptance
//! weight while a DC power flow can still serve the load. Feasibility is
//! monotone in the outage set (fewer outages only relax the flow problem),
//! which lets infeasible sets prune all of their supersets.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{AgentProfile, Day, NetworkModel};
use crate::error::{Error, Result};
use crate::lp::{LpProblem, RowKind, SimplexOptions};
use crate::scenarios::{ScenarioBook, ScenarioSet};

pub const DEFAULT_EPSILON: f64 = 0.5;

/// Total slack (MW) below which a dispatch counts as serving the load.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Bidder counts above this switch from sorted enumeration to
/// branch-and-bound.
const ENUMERATION_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptanceMode {
    /// A bid block is accepted only if every one of its days is.
    #[default]
    BlockAtomic,
    /// Each `(agent, day)` is decided on its own.
    PerTimestep,
}

impl std::fmt::Display for AcceptanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::BlockAtomic => "block-atomic",
            Self::PerTimestep => "per-timestep",
        })
    }
}

impl std::str::FromStr for AcceptanceMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "block-atomic" => Ok(Self::BlockAtomic),
            "per-timestep" => Ok(Self::PerTimestep),
            other => Err(format!("unknown acceptance mode `{other}`")),
        }
    }
}

/// `Σ_s π_s / (t2_s − t + ε)` over the scenarios still alive at `t`.
/// Scenarios that already failed (`t2_s < t`) contribute nothing.
pub fn acceptance_weight(set: &ScenarioSet, t: Day, epsilon: f64) -> f64 {
    set.scenarios
        .iter()
        .filter(|s| s.fail_time >= t)
        .map(|s| s.prob / ((s.fail_time - t) as f64 + epsilon))
        .sum()
}

/// Tightest valid big-M for the `z = (1 − y) q` envelope.
pub fn big_m_value(agents: &[AgentProfile]) -> f64 {
    agents.iter().map(|a| a.q_max).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dispatch {
    /// Commitment per agent index.
    pub u: Vec<bool>,
    /// Output per agent index, MW.
    pub q: Vec<f64>,
    /// Voltage angle per bus index, radians; the first bus is the reference.
    pub theta: Vec<f64>,
    /// Residual slack of the witness, MW (at most [`FEASIBILITY_TOL`]).
    pub unserved: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Feasibility {
    Feasible(Dispatch),
    /// Minimum total nodal slack over all dispatches, MW.
    Infeasible {
        unserved: f64,
    },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }

    pub fn dispatch(&self) -> Option<&Dispatch> {
        match self {
            Feasibility::Feasible(d) => Some(d),
            Feasibility::Infeasible { .. } => None,
        }
    }
}

/// Commitment restriction for one unit inside the branch on `u`.
#[derive(Clone, Copy, PartialEq)]
enum Commit {
    Free,
    Off,
    On,
}

fn slack_lp(
    net: &NetworkModel,
    agents: &[AgentProfile],
    commit: &[Commit],
    t: Day,
    opts: &SimplexOptions,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let nb = net.buses.len();
    let mut lp = LpProblem::new();
    let q: Vec<usize> = agents
        .iter()
        .zip(commit)
        .map(|(a, c)| match c {
            Commit::Off => lp.add_var(0.0, 0.0, 0.0),
            Commit::On => lp.add_var(a.q_min, a.q_max, 0.0),
            Commit::Free => lp.add_var(0.0, a.q_max, 0.0),
        })
        .collect();
    // scaled angles phi = base * theta, so flows are b * (phi_i - phi_j)
    let phi: Vec<usize> = (0..nb)
        .map(|j| {
            if j == 0 {
                lp.add_var(0.0, 0.0, 0.0)
            } else {
                lp.add_var(f64::NEG_INFINITY, f64::INFINITY, 0.0)
            }
        })
        .collect();
    let mut balance: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    for (n, a) in agents.iter().enumerate() {
        let j = net
            .bus_index(a.bus)
            .ok_or_else(|| Error::IndexOutOfRange(format!("agent {} sits on unknown bus {}", a.id, a.bus)))?;
        balance[j].push((q[n], 1.0));
    }
    for line in &net.lines {
        let (f, r) = (net.bus_index(line.from).unwrap(), net.bus_index(line.to).unwrap());
        let b = line.susceptance;
        // power leaving f towards r
        balance[f].push((phi[f], -b));
        balance[f].push((phi[r], b));
        balance[r].push((phi[r], -b));
        balance[r].push((phi[f], b));
        lp.add_row(
            vec![(phi[f], b), (phi[r], -b)],
            RowKind::Range(-line.capacity, line.capacity),
        );
    }
    for (j, mut coeffs) in balance.into_iter().enumerate() {
        let up = lp.add_var(0.0, f64::INFINITY, 1.0);
        let down = lp.add_var(0.0, f64::INFINITY, 1.0);
        coeffs.push((up, 1.0));
        coeffs.push((down, -1.0));
        lp.add_row(coeffs, RowKind::Eq(net.load_at(j, t)));
    }
    let sol = lp
        .solve(opts)?
        .optimal()
        .ok_or_else(|| Error::Lp(crate::lp::LpError::Numerical("slack problem not optimal".into())))?;
    let qv = q.iter().map(|&i| sol.x[i]).collect();
    let theta = phi.iter().map(|&i| sol.x[i] / net.base_mva).collect();
    Ok((sol.objective.max(0.0), qv, theta))
}

fn branch(
    net: &NetworkModel,
    agents: &[AgentProfile],
    commit: &mut Vec<Commit>,
    t: Day,
    opts: &SimplexOptions,
) -> Result<Feasibility> {
    let (unserved, q, theta) = slack_lp(net, agents, commit, t, opts)?;
    if unserved > FEASIBILITY_TOL {
        return Ok(Feasibility::Infeasible { unserved });
    }
    let split = (0..agents.len())
        .find(|&n| commit[n] == Commit::Free && q[n] > FEASIBILITY_TOL && q[n] < agents[n].q_min - FEASIBILITY_TOL);
    let Some(n) = split else {
        let u = commit
            .iter()
            .zip(&q)
            .zip(agents)
            .map(|((c, &qn), a)| match c {
                Commit::Off => false,
                Commit::On => true,
                Commit::Free => a.q_min <= 0.0 || qn > FEASIBILITY_TOL,
            })
            .collect::<Vec<_>>();
        let q = q.iter().zip(&u).map(|(&v, &on)| if on { v } else { 0.0 }).collect();
        return Ok(Feasibility::Feasible(Dispatch { u, q, theta, unserved }));
    };
    let mut best = f64::INFINITY;
    for choice in [Commit::On, Commit::Off] {
        commit[n] = choice;
        match branch(net, agents, commit, t, opts)? {
            Feasibility::Feasible(d) => {
                commit[n] = Commit::Free;
                return Ok(Feasibility::Feasible(d));
            }
            Feasibility::Infeasible { unserved } => best = best.min(unserved),
        }
    }
    commit[n] = Commit::Free;
    Ok(Feasibility::Infeasible { unserved: best })
}

/// Whether day `t` can be served with the given agent indices forced
/// offline; on success returns a witness dispatch. Units with a positive
/// minimum output are branched on their commitment.
pub fn dcopf_feasible_mask(
    net: &NetworkModel,
    agents: &[AgentProfile],
    out: u64,
    t: Day,
    opts: &SimplexOptions,
) -> Result<Feasibility> {
    let mut commit: Vec<Commit> = (0..agents.len())
        .map(|n| if out >> n & 1 == 1 { Commit::Off } else { Commit::Free })
        .collect();
    branch(net, agents, &mut commit, t, opts)
}

/// [`dcopf_feasible_mask`] keyed by agent ids.
pub fn dcopf_feasible(net: &NetworkModel, agents: &[AgentProfile], out_units: &[usize], t: Day) -> Result<Feasibility> {
    let mut mask = 0u64;
    for id in out_units {
        let n = agents
            .iter()
            .position(|a| a.id == *id)
            .ok_or_else(|| Error::IndexOutOfRange(format!("unknown agent id {id}")))?;
        mask |= 1 << n;
    }
    dcopf_feasible_mask(net, agents, mask, t, &SimplexOptions::default())
}

/// Memo of per-day feasibility checks keyed on `(day, outage mask)`.
/// The memo is tied to the network and units it was last used with and
/// starts over when [`solve_tso`] sees different ones.
#[derive(Debug, Default)]
pub struct FeasibilityCache {
    map: Mutex<HashMap<(Day, u64), Feasibility>>,
    owner: Mutex<Option<u64>>,
}

/// Hash of everything a feasibility check reads.
fn fingerprint(net: &NetworkModel, agents: &[AgentProfile]) -> u64 {
    let mut h = DefaultHasher::new();
    net.base_mva.to_bits().hash(&mut h);
    net.buses.hash(&mut h);
    for l in &net.lines {
        (l.from, l.to, l.susceptance.to_bits(), l.capacity.to_bits()).hash(&mut h);
    }
    net.unit_map.hash(&mut h);
    for row in &net.load {
        row.iter().for_each(|v| v.to_bits().hash(&mut h));
    }
    for a in agents {
        (a.id, a.bus, a.q_min.to_bits(), a.q_max.to_bits()).hash(&mut h);
    }
    h.finish()
}

impl FeasibilityCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn bind(&self, net: &NetworkModel, agents: &[AgentProfile]) {
        let key = fingerprint(net, agents);
        let mut owner = self.owner.lock().unwrap();
        if *owner != Some(key) {
            self.map.lock().unwrap().clear();
            *owner = Some(key);
        }
    }

    fn check(
        &self,
        net: &NetworkModel,
        agents: &[AgentProfile],
        out: u64,
        t: Day,
        opts: &SimplexOptions,
    ) -> Result<Feasibility> {
        if let Some(f) = self.map.lock().unwrap().get(&(t, out)) {
            return Ok(f.clone());
        }
        let f = dcopf_feasible_mask(net, agents, out, t, opts)?;
        self.map.lock().unwrap().insert((t, out), f.clone());
        Ok(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TsoOptions {
    pub epsilon: f64,
    pub mode: AcceptanceMode,
    #[serde(skip)]
    pub simplex: SimplexOptions,
}

impl Default for TsoOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            mode: AcceptanceMode::default(),
            simplex: SimplexOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TsoSolution {
    /// `agent × day` lattices, `y[n][t - 1]`.
    pub y: Vec<Vec<bool>>,
    pub u: Vec<Vec<bool>>,
    pub q: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    /// `bus × day`.
    pub theta: Vec<Vec<f64>>,
    pub objective_value: f64,
    pub per_timestep_feasible: Vec<bool>,
}

/// Bidders on one day together with their weights.
struct DayProblem<'a> {
    t: Day,
    bidders: Vec<usize>,
    weights: &'a [f64],
}

/// Ordering of candidate outage sets: larger weight, then more accepted
/// bids, then the lexicographically smallest agent indices.
fn better(a: (f64, u32, u64), b: (f64, u32, u64)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    a.2.reverse_bits() > b.2.reverse_bits()
}

fn is_subset(a: u64, b: u64) -> bool {
    a & !b == 0
}

fn mask_weight(mask: u64, weights: &[f64]) -> f64 {
    (0..64).filter(|n| mask >> n & 1 == 1).map(|n| weights[n]).sum()
}

impl DayProblem<'_> {
    fn solve(
        &self,
        net: &NetworkModel,
        agents: &[AgentProfile],
        cache: &FeasibilityCache,
        opts: &SimplexOptions,
    ) -> Result<(u64, Feasibility)> {
        if self.bidders.len() <= ENUMERATION_LIMIT {
            self.enumerate(net, agents, cache, opts)
        } else {
            self.branch_and_bound(net, agents, cache, opts)
        }
    }

    fn key(&self, mask: u64) -> (f64, u32, u64) {
        (mask_weight(mask, self.weights), mask.count_ones(), mask)
    }

    fn enumerate(
        &self,
        net: &NetworkModel,
        agents: &[AgentProfile],
        cache: &FeasibilityCache,
        opts: &SimplexOptions,
    ) -> Result<(u64, Feasibility)> {
        let empty = cache.check(net, agents, 0, self.t, opts)?;
        if !empty.is_feasible() {
            return Ok((0, empty));
        }
        let k = self.bidders.len();
        let mut masks: Vec<(f64, u32, u64)> = (0u64..1 << k)
            .map(|local| {
                let mask = (0..k)
                    .filter(|i| local >> i & 1 == 1)
                    .fold(0u64, |m, i| m | 1 << self.bidders[i]);
                self.key(mask)
            })
            .collect();
        masks.sort_by(|a, b| {
            if better(*a, *b) {
                std::cmp::Ordering::Less
            } else if better(*b, *a) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        let mut infeasible: Vec<u64> = Vec::new();
        for (_, _, mask) in masks {
            if infeasible.iter().any(|&bad| is_subset(bad, mask)) {
                continue;
            }
            let f = cache.check(net, agents, mask, self.t, opts)?;
            if f.is_feasible() {
                return Ok((mask, f));
            }
            infeasible.push(mask);
        }
        Ok((0, empty))
    }

    fn branch_and_bound(
        &self,
        net: &NetworkModel,
        agents: &[AgentProfile],
        cache: &FeasibilityCache,
        opts: &SimplexOptions,
    ) -> Result<(u64, Feasibility)> {
        let mut order = self.bidders.clone();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        let suffix: Vec<f64> = {
            let mut s = vec![0.0; order.len() + 1];
            for i in (0..order.len()).rev() {
                s[i] = s[i + 1] + self.weights[order[i]];
            }
            s
        };
        let empty = cache.check(net, agents, 0, self.t, opts)?;
        if !empty.is_feasible() {
            return Ok((0, empty));
        }
        let mut best = (self.key(0), empty);
        let mut infeasible: Vec<u64> = Vec::new();
        let mut stack = vec![(0usize, 0u64)];
        while let Some((depth, mask)) = stack.pop() {
            if depth == order.len() {
                continue;
            }
            if mask_weight(mask, self.weights) + suffix[depth] < best.0 .0 {
                continue;
            }
            // exclude branch first so the include branch is explored first
            stack.push((depth + 1, mask));
            let with = mask | 1 << order[depth];
            if infeasible.iter().any(|&bad| is_subset(bad, with)) {
                continue;
            }
            let f = cache.check(net, agents, with, self.t, opts)?;
            if f.is_feasible() {
                let key = self.key(with);
                if better(key, best.0) {
                    best = (key, f);
                }
                stack.push((depth + 1, with));
            } else {
                infeasible.push(with);
            }
        }
        Ok((best.0 .2, best.1))
    }
}

/// Exact optimizer of the acceptance problem for bid lattice
/// `bids[n][t - 1]`.
pub fn solve_tso(
    net: &NetworkModel,
    agents: &[AgentProfile],
    bids: &[Vec<bool>],
    scenarios: &ScenarioBook,
    opts: &TsoOptions,
    cache: &FeasibilityCache,
) -> Result<TsoSolution> {
    if agents.len() > 64 {
        return Err(Error::InvalidInput("at most 64 agents are supported".into()));
    }
    if bids.len() != agents.len() {
        return Err(Error::InvalidInput("bid lattice does not match agent list".into()));
    }
    let days = bids.first().map_or(0, Vec::len);
    if bids.iter().any(|b| b.len() != days) || days > net.days() {
        return Err(Error::InvalidInput(
            "bid lattice has inconsistent or excess days".into(),
        ));
    }
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {}",
            opts.epsilon
        )));
    }
    cache.bind(net, agents);
    let weights: Vec<Vec<f64>> = (1..=days)
        .map(|t| {
            agents
                .iter()
                .enumerate()
                .map(|(n, a)| {
                    scenarios
                        .set_for(a, n, t)
                        .map_or(0.0, |s| acceptance_weight(s, t, opts.epsilon))
                })
                .collect()
        })
        .collect();
    let mut active: Vec<Vec<bool>> = bids.to_vec();
    let mut accepted: Vec<Option<(u64, Feasibility)>> = vec![None; days];
    let mut dirty: Vec<bool> = vec![true; days];
    loop {
        let todo: Vec<Day> = (1..=days).filter(|&t| dirty[t - 1]).collect();
        let solved = todo
            .par_iter()
            .map(|&t| {
                let bidders = (0..agents.len()).filter(|&n| active[n][t - 1]).collect();
                DayProblem {
                    t,
                    bidders,
                    weights: &weights[t - 1],
                }
                .solve(net, agents, cache, &opts.simplex)
            })
            .collect::<Vec<_>>();
        for (&t, result) in todo.iter().zip(solved) {
            let (mask, f) = result?;
            if let Feasibility::Infeasible { unserved } = f {
                return Err(Error::LoadUnsatisfiable { day: t, unserved });
            }
            accepted[t - 1] = Some((mask, f));
            dirty[t - 1] = false;
        }
        if opts.mode == AcceptanceMode::PerTimestep {
            break;
        }
        let mut changed = false;
        for n in 0..agents.len() {
            let mut d = 0;
            while d < days {
                if !active[n][d] {
                    d += 1;
                    continue;
                }
                let start = d;
                while d < days && active[n][d] {
                    d += 1;
                }
                let whole = (start..d).all(|i| accepted[i].as_ref().unwrap().0 >> n & 1 == 1);
                if !whole {
                    for i in start..d {
                        active[n][i] = false;
                        dirty[i] = true;
                    }
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let na = agents.len();
    let nb = net.buses.len();
    let mut sol = TsoSolution {
        y: vec![vec![false; days]; na],
        u: vec![vec![false; days]; na],
        q: vec![vec![0.0; days]; na],
        z: vec![vec![0.0; days]; na],
        theta: vec![vec![0.0; days]; nb],
        objective_value: 0.0,
        per_timestep_feasible: vec![true; days],
    };
    for (d, entry) in accepted.into_iter().enumerate() {
        let (mask, f) = entry.expect("every day solved");
        let dispatch = f.dispatch().expect("accepted set is feasible");
        for n in 0..na {
            let y = mask >> n & 1 == 1;
            sol.y[n][d] = y;
            sol.u[n][d] = dispatch.u[n];
            sol.q[n][d] = dispatch.q[n];
            sol.z[n][d] = if y { 0.0 } else { dispatch.q[n] };
            if y {
                sol.objective_value += weights[d][n];
            }
        }
        for j in 0..nb {
            sol.theta[j][d] = dispatch.theta[j];
        }
    }
    Ok(sol)
}

/// Largest nodal-balance and line-limit violations (MW) of a dispatch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct FlowResiduals {
    pub balance: f64,
    pub line: f64,
}

pub fn flow_residuals(net: &NetworkModel, agents: &[AgentProfile], z: &[f64], theta: &[f64], t: Day) -> FlowResiduals {
    let mut injection: Vec<f64> = (0..net.buses.len()).map(|j| -net.load_at(j, t)).collect();
    for (a, &zn) in agents.iter().zip(z) {
        injection[net.bus_index(a.bus).unwrap()] += zn;
    }
    let mut line = 0.0f64;
    for l in &net.lines {
        let (f, r) = (net.bus_index(l.from).unwrap(), net.bus_index(l.to).unwrap());
        let flow = l.susceptance * net.base_mva * (theta[f] - theta[r]);
        injection[f] -= flow;
        injection[r] += flow;
        line = line.max(flow.abs() - l.capacity);
    }
    FlowResiduals {
        balance: injection.iter().fold(0.0, |m, v| m.max(v.abs())),
        line: line.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FaultEvent, GammaSpec, Line};
    use crate::scenarios::Scenario;
    use std::collections::BTreeMap;

    fn set(points: &[(Day, f64)]) -> ScenarioSet {
        ScenarioSet {
            agent: 1,
            event: 0,
            detect_time: 1,
            horizon_end: 200,
            scenarios: points
                .iter()
                .map(|&(fail_time, prob)| Scenario { fail_time, prob })
                .collect(),
            clamped_mass: 0.0,
        }
    }

    #[test]
    fn weight_examples() {
        assert_eq!(acceptance_weight(&set(&[(100, 1.0)]), 100, 0.5), 2.0);
        let two = acceptance_weight(&set(&[(90, 0.5), (110, 0.5)]), 100, 0.5);
        assert_eq!(two, 0.5 / 10.5);
        let s = set(&[(100, 1.0)]);
        let w: Vec<f64> = (80..=100).map(|t| acceptance_weight(&s, t, 0.5)).collect();
        assert!(w.windows(2).all(|p| p[0] < p[1]));
        assert!(w[0] > 0.0);
    }

    fn unit(id: usize, bus: usize, q_max: f64) -> AgentProfile {
        let e = FaultEvent::new(1, 5, 0.0, 1, 5).unwrap();
        AgentProfile::new(id, bus, 0.0, q_max, vec![0.0; 5], 2, 1.0, GammaSpec::Auto, vec![e]).unwrap()
    }

    /// Three buses in a triangle with equal susceptances. Generators at
    /// buses 1 and 2, load at bus 3.
    fn triangle(cap12: f64, cap13: f64, cap23: f64, load: f64) -> NetworkModel {
        let lines = vec![
            Line {
                from: 1,
                to: 2,
                susceptance: 10.0,
                capacity: cap12,
            },
            Line {
                from: 1,
                to: 3,
                susceptance: 10.0,
                capacity: cap13,
            },
            Line {
                from: 2,
                to: 3,
                susceptance: 10.0,
                capacity: cap23,
            },
        ];
        let map = BTreeMap::from([(1, 1), (2, 2)]);
        NetworkModel::new(
            100.0,
            vec![1, 2, 3],
            lines,
            map,
            vec![vec![0.0; 5], vec![0.0; 5], vec![load; 5]],
            vec![1.0; 5],
        )
        .unwrap()
    }

    /// With equal susceptances an injection g1 at bus 1 and g2 at bus 2
    /// delivered to bus 3 splits as f13 = (2 g1 + g2) / 3,
    /// f23 = (g1 + 2 g2) / 3, f12 = (g1 - g2) / 3. Scan the supply split on
    /// a fine grid.
    fn triangle_oracle(c: [f64; 3], caps: [f64; 2], out: [bool; 2], load: f64) -> bool {
        let steps = 4000;
        (0..=steps).any(|k| {
            let g1 = if out[0] { 0.0 } else { load * k as f64 / steps as f64 };
            let g2 = load - g1;
            if g1 > caps[0] + 1e-9 || g2 > caps[1] + 1e-9 || g2 < -1e-9 || (out[1] && g2 > 1e-9) {
                return false;
            }
            let f12 = (g1 - g2) / 3.0;
            let f13 = (2.0 * g1 + g2) / 3.0;
            let f23 = (g1 + 2.0 * g2) / 3.0;
            f12.abs() <= c[0] + 1e-9 && f13.abs() <= c[1] + 1e-9 && f23.abs() <= c[2] + 1e-9
        })
    }

    #[test]
    fn triangle_matches_flow_oracle() {
        let agents = vec![unit(1, 1, 150.0), unit(2, 2, 150.0)];
        for &(c12, c13, c23) in &[
            (100.0, 100.0, 100.0),
            (10.0, 60.0, 200.0),
            (30.0, 45.0, 200.0),
            (5.0, 200.0, 40.0),
        ] {
            for &load in &[60.0, 90.0, 120.0, 149.0] {
                let net = triangle(c12, c13, c23, load);
                for out in 0u64..4 {
                    let f = dcopf_feasible_mask(&net, &agents, out, 1, &SimplexOptions::default()).unwrap();
                    let want = triangle_oracle([c12, c13, c23], [150.0, 150.0], [out & 1 == 1, out & 2 == 2], load);
                    assert_eq!(f.is_feasible(), want, "caps {c12},{c13},{c23} load {load} out {out}");
                    if let Feasibility::Feasible(d) = f {
                        let z: Vec<f64> = d.q.clone();
                        let r = flow_residuals(&net, &agents, &z, &d.theta, 1);
                        assert!(r.balance <= 1e-6 && r.line <= 1e-6, "{r:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn all_units_out_is_infeasible() {
        let agents = vec![unit(1, 1, 150.0), unit(2, 2, 150.0)];
        let net = triangle(100.0, 100.0, 100.0, 50.0);
        let f = dcopf_feasible(&net, &agents, &[1, 2], 1).unwrap();
        assert!(matches!(f, Feasibility::Infeasible { unserved } if (unserved - 50.0).abs() < 1e-6));
        assert!(dcopf_feasible(&net, &agents, &[], 1).unwrap().is_feasible());
        assert!(dcopf_feasible(&net, &agents, &[7], 1).is_err());
    }

    #[test]
    fn minimum_output_forces_branching() {
        // bus-2 unit must run at 100 or more but only 60 is needed, so it
        // can only help by staying off
        let mut agents = vec![unit(1, 1, 150.0), unit(2, 2, 150.0)];
        agents[1].q_min = 100.0;
        let net = triangle(200.0, 200.0, 200.0, 60.0);
        let f = dcopf_feasible_mask(&net, &agents, 0, 1, &SimplexOptions::default()).unwrap();
        let d = f.dispatch().unwrap();
        assert!(!d.u[1] || d.q[1] >= 100.0 - 1e-9);
        // with unit 1 out, unit 2 alone overshoots the load
        let f = dcopf_feasible_mask(&net, &agents, 1, 1, &SimplexOptions::default()).unwrap();
        assert!(!f.is_feasible());
    }

    #[test]
    fn big_m_is_max_capacity() {
        let agents = vec![unit(1, 1, 150.0), unit(2, 2, 90.0)];
        assert_eq!(big_m_value(&agents), 150.0);
        let same = vec![unit(1, 1, 70.0), unit(2, 2, 70.0)];
        assert_eq!(big_m_value(&same), 70.0);
    }

    fn book(sets: Vec<ScenarioSet>) -> ScenarioBook {
        ScenarioBook {
            sets: sets.into_iter().map(|s| vec![s]).collect(),
        }
    }

    #[test]
    fn overlapping_bids_accept_the_more_urgent() {
        // either unit alone covers the load, not both out
        let agents = vec![unit(1, 1, 150.0), unit(2, 2, 150.0)];
        let net = triangle(200.0, 200.0, 200.0, 100.0);
        let bids = vec![
            vec![false, true, true, false, false],
            vec![false, true, true, false, false],
        ];
        let scen = book(vec![set(&[(20, 1.0)]), set(&[(4, 1.0)])]);
        let cache = FeasibilityCache::new();
        let sol = solve_tso(&net, &agents, &bids, &scen, &TsoOptions::default(), &cache).unwrap();
        assert_eq!(sol.y[0], vec![false; 5]);
        assert_eq!(sol.y[1], bids[1]);
        let w = acceptance_weight(&scen.sets[1][0], 2, 0.5) + acceptance_weight(&scen.sets[1][0], 3, 0.5);
        assert!((sol.objective_value - w).abs() < 1e-12);
        for n in 0..2 {
            for d in 0..5 {
                assert!(!sol.y[n][d] || bids[n][d]);
                assert_eq!(sol.z[n][d], if sol.y[n][d] { 0.0 } else { sol.q[n][d] });
                assert!(sol.z[n][d] <= big_m_value(&agents) * (1.0 - sol.y[n][d] as u8 as f64) + 1e-9);
            }
        }
    }

    #[test]
    fn disjoint_bids_are_all_accepted() {
        let agents = vec![unit(1, 1, 150.0), unit(2, 2, 150.0)];
        let net = triangle(200.0, 200.0, 200.0, 100.0);
        let bids = vec![
            vec![true, true, false, false, false],
            vec![false, false, false, true, true],
        ];
        let scen = book(vec![set(&[(20, 1.0)]), set(&[(20, 1.0)])]);
        let sol = solve_tso(
            &net,
            &agents,
            &bids,
            &scen,
            &TsoOptions::default(),
            &FeasibilityCache::new(),
        )
        .unwrap();
        assert_eq!(sol.y, bids);
    }

    #[test]
    fn block_atomic_rejects_partial_blocks() {
        // unit 2's block spans days 2-3, but on day 3 unit 1 is also out and
        // is more urgent. Per-timestep keeps day 2; block-atomic drops both.
        let agents = vec![unit(1, 1, 150.0), unit(2, 2, 150.0)];
        let net = triangle(200.0, 200.0, 200.0, 100.0);
        let bids = vec![
            vec![false, false, true, false, false],
            vec![false, true, true, false, false],
        ];
        let scen = book(vec![set(&[(3, 1.0)]), set(&[(30, 1.0)])]);
        let cache = FeasibilityCache::new();
        let per = TsoOptions {
            mode: AcceptanceMode::PerTimestep,
            ..TsoOptions::default()
        };
        let a = solve_tso(&net, &agents, &bids, &scen, &per, &cache).unwrap();
        assert_eq!(a.y[1], vec![false, true, false, false, false]);
        let b = solve_tso(&net, &agents, &bids, &scen, &TsoOptions::default(), &cache).unwrap();
        assert_eq!(b.y[1], vec![false; 5]);
        assert_eq!(b.y[0], bids[0]);
    }

    #[test]
    fn branch_and_bound_agrees_with_enumeration() {
        // 14 identical single-bus units, load requires 9 of them online
        let lines = vec![Line {
            from: 1,
            to: 2,
            susceptance: 10.0,
            capacity: 1e4,
        }];
        let agents: Vec<AgentProfile> = (1..=14).map(|i| unit(i, 1, 10.0)).collect();
        let map = agents.iter().map(|a| (a.id, 1)).collect();
        let net = NetworkModel::new(
            100.0,
            vec![1, 2],
            lines,
            map,
            vec![vec![0.0; 5], vec![85.0; 5]],
            vec![1.0; 5],
        )
        .unwrap();
        let weights: Vec<f64> = (0..14).map(|i| 1.0 + (i as f64 * 0.37).sin().abs()).collect();
        let p = DayProblem {
            t: 1,
            bidders: (0..14).collect(),
            weights: &weights,
        };
        let cache = FeasibilityCache::new();
        let opts = SimplexOptions::default();
        let (bb, _) = p.branch_and_bound(&net, &agents, &cache, &opts).unwrap();
        let (en, _) = p.enumerate(&net, &agents, &cache, &opts).unwrap();
        assert_eq!(bb, en);
        assert_eq!(bb.count_ones(), 5);
        let mut top: Vec<usize> = (0..14).collect();
        top.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
        let want = top[..5].iter().fold(0u64, |m, &i| m | 1 << i);
        assert_eq!(bb, want);
    }

    #[test]
    fn unsatisfiable_load_is_an_error() {
        let agents = vec![unit(1, 1, 10.0), unit(2, 2, 10.0)];
        let net = triangle(200.0, 200.0, 200.0, 100.0);
        let bids = vec![vec![false; 5], vec![false; 5]];
        let scen = book(vec![set(&[(20, 1.0)]), set(&[(20, 1.0)])]);
        let err = solve_tso(
            &net,
            &agents,
            &bids,
            &scen,
            &TsoOptions::default(),
            &FeasibilityCache::new(),
        );
        assert!(matches!(err, Err(Error::LoadUnsatisfiable { day: 1, .. })));
    }
}
