//! Generator for the bundled New England 39-bus dataset.
//!
//! Topology, reactances, thermal ratings, nodal loads and unit ratings
//! follow the standard MATPOWER `case39`. The yearly load curve, prices
//! and unit economics are synthetic.

use std::f64::consts::PI;

use crate::domain::{default_horizons, Day, GammaSpec};
use crate::error::Result;
use crate::io::dataset::{BusRecord, Dataset, FaultRecord, LineRecord, LoadRecord, UnitRecord};

pub const BASE_MVA: f64 = 100.0;
pub const PEAK_LOAD: f64 = 6254.0;
pub const MIN_LOAD: f64 = 3026.0;
pub const PRICE_FLOOR: f64 = 30.0;
pub const PRICE_SPAN: f64 = 30.0;
pub const REPAIR_TIME: usize = 2;
/// Scale of the fault-progression constant; see [`alpha_for`].
pub const ALPHA_SCALE: f64 = 2000.0;
/// Uniform uprating of the `case39` thermal limits. At the stock ratings
/// several single-unit outages are network-infeasible on winter days.
pub const RATING_SCALE: f64 = 1.35;

/// `(bus, Pd)` for every bus of `case39`, MW.
const BUS_LOAD: [(usize, f64); 39] = [
    (1, 97.6),
    (2, 0.0),
    (3, 322.0),
    (4, 500.0),
    (5, 0.0),
    (6, 0.0),
    (7, 233.8),
    (8, 522.0),
    (9, 6.5),
    (10, 0.0),
    (11, 0.0),
    (12, 8.53),
    (13, 0.0),
    (14, 0.0),
    (15, 320.0),
    (16, 329.0),
    (17, 0.0),
    (18, 158.0),
    (19, 0.0),
    (20, 680.0),
    (21, 274.0),
    (22, 0.0),
    (23, 247.5),
    (24, 308.6),
    (25, 224.0),
    (26, 139.0),
    (27, 281.0),
    (28, 206.0),
    (29, 283.5),
    (30, 0.0),
    (31, 9.2),
    (32, 0.0),
    (33, 0.0),
    (34, 0.0),
    (35, 0.0),
    (36, 0.0),
    (37, 0.0),
    (38, 0.0),
    (39, 1104.0),
];

/// `(from, to, x, rateA)` for the 46 branches.
const BRANCHES: [(usize, usize, f64, f64); 46] = [
    (1, 2, 0.0411, 600.0),
    (1, 39, 0.025, 1000.0),
    (2, 3, 0.0151, 500.0),
    (2, 25, 0.0086, 500.0),
    (2, 30, 0.0181, 900.0),
    (3, 4, 0.0213, 500.0),
    (3, 18, 0.0133, 500.0),
    (4, 5, 0.0128, 600.0),
    (4, 14, 0.0129, 500.0),
    (5, 6, 0.0026, 1200.0),
    (5, 8, 0.0112, 900.0),
    (6, 7, 0.0092, 900.0),
    (6, 11, 0.0082, 480.0),
    (6, 31, 0.025, 1800.0),
    (7, 8, 0.0046, 900.0),
    (8, 9, 0.0363, 900.0),
    (9, 39, 0.025, 900.0),
    (10, 11, 0.0043, 600.0),
    (10, 13, 0.0043, 600.0),
    (10, 32, 0.02, 900.0),
    (12, 11, 0.0435, 500.0),
    (12, 13, 0.0435, 500.0),
    (13, 14, 0.0101, 600.0),
    (14, 15, 0.0217, 600.0),
    (15, 16, 0.0094, 600.0),
    (16, 17, 0.0089, 600.0),
    (16, 19, 0.0195, 600.0),
    (16, 21, 0.0135, 600.0),
    (16, 24, 0.0059, 600.0),
    (17, 18, 0.0082, 600.0),
    (17, 27, 0.0173, 600.0),
    (19, 20, 0.0138, 900.0),
    (19, 33, 0.0142, 900.0),
    (20, 34, 0.018, 900.0),
    (21, 22, 0.014, 900.0),
    (22, 23, 0.0096, 600.0),
    (22, 35, 0.0143, 900.0),
    (23, 24, 0.035, 600.0),
    (23, 36, 0.0272, 900.0),
    (25, 26, 0.0323, 600.0),
    (25, 37, 0.0232, 900.0),
    (26, 27, 0.0147, 600.0),
    (26, 28, 0.0474, 600.0),
    (26, 29, 0.0625, 600.0),
    (28, 29, 0.0151, 600.0),
    (29, 38, 0.0156, 1200.0),
];

/// `(bus, Pmax)` for the ten units; agent `n` owns the `n`-th entry.
const UNITS: [(usize, f64); 10] = [
    (30, 1040.0),
    (31, 646.0),
    (32, 725.0),
    (33, 652.0),
    (34, 508.0),
    (35, 687.0),
    (36, 580.0),
    (37, 564.0),
    (38, 865.0),
    (39, 1100.0),
];

type Thresholds = (&'static [Day], &'static [Day], &'static [f64]);

/// Detection days, mean failure days and spreads per agent.
#[allow(clippy::approx_constant)]
const THRESHOLDS: [Thresholds; 10] = [
    (&[55, 172, 290], &[115, 251, 380], &[6.67, 6.56, 5.45]),
    (&[31, 132, 226, 282], &[91, 185, 258, 360], &[5.06, 6.92, 5.77, 5.15]),
    (&[48, 152, 266, 363], &[109, 201, 306, 396], &[6.32, 6.95, 5.89, 6.23]),
    (
        &[22, 125, 200, 272],
        &[82, 165, 241, 320, 400],
        &[5.74, 5.44, 6.27, 6.39, 5.25],
    ),
    (
        &[24, 115, 186, 273],
        &[84, 161, 239, 324, 416],
        &[6.28, 5.20, 5.03, 5.32, 6.05],
    ),
    (&[54, 173, 283], &[114, 236, 371], &[5.14, 6.70, 6.39]),
    (&[37, 159, 217, 301], &[97, 178, 272, 365], &[5.48, 6.09, 6.32, 6.88]),
    (&[42, 125, 244, 363], &[102, 212, 330, 435], &[5.59, 5.63, 6.33, 5.23]),
    (&[49, 157, 264, 363], &[109, 224, 335, 450], &[5.88, 6.53, 6.81, 6.76]),
    (&[58, 173, 304, 417], &[118, 247, 349, 457], &[5.61, 6.59, 5.81, 5.77]),
];

/// Unscaled yearly shape: a December peak plus a summer bump.
fn load_shape(day: Day) -> f64 {
    let d = day as f64;
    (2.0 * PI * (d - 350.0) / 365.0).cos() + 0.8 * (-((d - 205.0) / 22.0).powi(2)).exp()
}

pub fn load_curve() -> Vec<LoadRecord> {
    let raw: Vec<f64> = (1..=365).map(load_shape).collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .enumerate()
        .map(|(i, &v)| {
            let share = (v - lo) / (hi - lo);
            let load_mw = if v == hi {
                PEAK_LOAD
            } else if v == lo {
                MIN_LOAD
            } else {
                MIN_LOAD + share * (PEAK_LOAD - MIN_LOAD)
            };
            LoadRecord {
                day: i + 1,
                load_mw,
                price: PRICE_FLOOR + PRICE_SPAN * share,
            }
        })
        .collect()
}

/// Larger units run cheaper: marginal cost falls linearly from 28 to 16
/// $/MW across the capacity range.
pub fn marginal_cost(q_max: f64) -> f64 {
    let (lo, hi) = UNITS
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &(_, p)| (lo.min(p), hi.max(p)));
    16.0 + 12.0 * (hi - q_max) / (hi - lo)
}

/// `ALPHA_SCALE · e^{−G}` where `G` is the agent's longest stretch from a
/// detection day to the end of its window. This keeps the largest
/// penalty rate of every agent on the same order.
pub fn alpha_for(windows: &[(Day, Day)]) -> f64 {
    let g = windows.iter().map(|&(t1, end)| end - t1).max().unwrap_or(0);
    ALPHA_SCALE * (-(g as f64)).exp()
}

pub fn dataset() -> Result<Dataset> {
    let total: f64 = BUS_LOAD.iter().map(|b| b.1).sum();
    let buses = BUS_LOAD
        .iter()
        .map(|&(bus_id, pd)| BusRecord {
            bus_id,
            participation: pd / total,
        })
        .collect();
    let lines = BRANCHES
        .iter()
        .map(|&(from, to, x, rate)| {
            // a radial step-up branch must be able to carry the unit's full rating
            let radial = |bus: usize| BRANCHES.iter().filter(|b| b.0 == bus || b.1 == bus).count() == 1;
            let unit = UNITS
                .iter()
                .find(|u| (u.0 == from || u.0 == to) && radial(u.0))
                .map_or(0.0, |u| u.1);
            LineRecord {
                from,
                to,
                susceptance_pu: 1.0 / x,
                capacity_mw: (RATING_SCALE * rate).max(unit),
            }
        })
        .collect();
    let mut units = Vec::new();
    let mut faults = Vec::new();
    for (n, (&(bus, q_max), &(t1, tau, sigma))) in UNITS.iter().zip(&THRESHOLDS).enumerate() {
        let agent = n + 1;
        // extra trailing mean/spread entries have no detection day and are dropped
        let triples: Vec<(Day, Day, f64)> = (0..t1.len()).map(|k| (t1[k], tau[k], sigma[k])).collect();
        let events = default_horizons(&triples)?;
        let windows: Vec<(Day, Day)> = events.iter().map(|e| (e.detect_time, e.horizon_end)).collect();
        units.push(UnitRecord {
            agent,
            bus,
            q_min: 0.0,
            q_max,
            marginal_cost: marginal_cost(q_max),
            repair_time: REPAIR_TIME,
            alpha: alpha_for(&windows),
            gamma: GammaSpec::Auto,
        });
        for (k, e) in events.iter().enumerate() {
            faults.push(FaultRecord {
                agent,
                event: k + 1,
                t1: e.detect_time,
                tau: e.rul_mean,
                sigma: e.rul_std,
                horizon_start: e.horizon_start,
                horizon_end: e.horizon_end,
            });
        }
    }
    Ok(Dataset {
        base_mva: BASE_MVA,
        buses,
        lines,
        units,
        faults,
        load: load_curve(),
    })
}
