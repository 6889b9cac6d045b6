//! Tab-separated dataset files.
//!
//! Every file opens with a version line `# gmsneg <kind> v1` followed by
//! a column header row. Further `#` lines are ignored.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{default_horizons, AgentProfile, Day, FaultEvent, GammaSpec, Line, NetworkModel, TimeGrid};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub bus_id: usize,
    /// Share of the system load drawn at this bus.
    pub participation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub from: usize,
    pub to: usize,
    pub susceptance_pu: f64,
    pub capacity_mw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub agent: usize,
    pub bus: usize,
    pub q_min: f64,
    pub q_max: f64,
    /// $/MW; the daily generation cost is `marginal_cost * q_max`.
    pub marginal_cost: f64,
    pub repair_time: usize,
    pub alpha: f64,
    #[serde(with = "gamma_text")]
    pub gamma: GammaSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub agent: usize,
    pub event: usize,
    pub t1: Day,
    pub tau: Day,
    pub sigma: f64,
    pub horizon_start: Day,
    pub horizon_end: Day,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadRecord {
    pub day: Day,
    pub load_mw: f64,
    pub price: f64,
}

mod gamma_text {
    use super::GammaSpec;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(g: &GammaSpec, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(g)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<GammaSpec, D::Error> {
        let text = String::deserialize(d)?;
        text.parse()
            .map_err(|e| serde::de::Error::custom(format!("gamma: {e}")))
    }
}

/// File names of one dataset, relative to its directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataFiles {
    pub buses: PathBuf,
    pub lines: PathBuf,
    pub units: PathBuf,
    pub faults: PathBuf,
    pub load: PathBuf,
}

impl Default for DataFiles {
    fn default() -> Self {
        Self {
            buses: "buses.tsv".into(),
            lines: "lines.tsv".into(),
            units: "units.tsv".into(),
            faults: "faults.tsv".into(),
            load: "load.tsv".into(),
        }
    }
}

/// Raw dataset as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub base_mva: f64,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    pub units: Vec<UnitRecord>,
    pub faults: Vec<FaultRecord>,
    /// System-wide daily series. Days past the end wrap around.
    pub load: Vec<LoadRecord>,
}

fn header(kind: &str) -> String {
    format!("# gmsneg {kind} v{FORMAT_VERSION}")
}

fn read_table<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let first = text.lines().next().unwrap_or("");
    if first.trim_end() != header(kind) {
        return Err(Error::Parse {
            file,
            row: 1,
            col: 1,
            msg: format!("expected version line `{}`, found `{first}`", header(kind)),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_error(&file, &e, &[]))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let mut out = Vec::new();
    for record in reader.deserialize() {
        out.push(record.map_err(|e| parse_error(&file, &e, &names))?);
    }
    Ok(out)
}

/// Custom field errors carry no index; they are prefixed with the column name instead.
fn parse_error(file: &str, e: &csv::Error, names: &[&str]) -> Error {
    let (row, col) = match e.kind() {
        csv::ErrorKind::Deserialize { pos, err } => {
            let named = || {
                let msg = err.kind().to_string();
                names
                    .iter()
                    .position(|n| msg.starts_with(&format!("{n}:")))
                    .map_or(0, |i| i + 1)
            };
            (
                pos.as_ref().map_or(0, |p| p.line() as usize),
                err.field().map_or_else(named, |f| f as usize + 1),
            )
        }
        csv::ErrorKind::UnequalLengths { pos, .. } => (pos.as_ref().map_or(0, |p| p.line() as usize), 0),
        _ => (e.position().map_or(0, |p| p.line() as usize), 0),
    };
    let msg = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.kind().to_string(),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => e.to_string(),
    };
    Error::Parse {
        file: file.to_string(),
        row,
        col,
        msg,
    }
}

pub(crate) fn write_table<T: Serialize>(path: &Path, kind: &str, rows: &[T]) -> Result<()> {
    let mut buf = header(kind).into_bytes();
    buf.push(b'\n');
    {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(&mut buf);
        for r in rows {
            w.serialize(r)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn invalid(file: &Path, row: usize, msg: String) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        row,
        col: 0,
        msg,
    }
}

impl Dataset {
    pub fn read_dir(dir: &Path, files: &DataFiles, base_mva: f64) -> Result<Self> {
        let ds = Self {
            base_mva,
            buses: read_table(&dir.join(&files.buses), "buses")?,
            lines: read_table(&dir.join(&files.lines), "lines")?,
            units: read_table(&dir.join(&files.units), "units")?,
            faults: read_table(&dir.join(&files.faults), "faults")?,
            load: read_table(&dir.join(&files.load), "load")?,
        };
        // data rows start after the version and column lines
        for (i, r) in ds.load.iter().enumerate() {
            if r.day != i + 1 {
                return Err(invalid(
                    &dir.join(&files.load),
                    i + 3,
                    format!("expected day {}, found {}", i + 1, r.day),
                ));
            }
        }
        if ds.load.is_empty() {
            return Err(invalid(&dir.join(&files.load), 3, "load file has no rows".into()));
        }
        Ok(ds)
    }

    pub fn write_dir(&self, dir: &Path, files: &DataFiles) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_table(&dir.join(&files.buses), "buses", &self.buses)?;
        write_table(&dir.join(&files.lines), "lines", &self.lines)?;
        write_table(&dir.join(&files.units), "units", &self.units)?;
        write_table(&dir.join(&files.faults), "faults", &self.faults)?;
        write_table(&dir.join(&files.load), "load", &self.load)
    }

    /// Grid length: the last horizon end, and at least one load cycle.
    pub fn grid_days(&self) -> usize {
        self.faults
            .iter()
            .map(|f| f.horizon_end)
            .max()
            .unwrap_or(0)
            .max(self.load.len())
    }

    pub fn load_on(&self, t: Day) -> &LoadRecord {
        &self.load[(t - 1) % self.load.len()]
    }

    /// Typed model over `grid_days()` days.
    pub fn build(&self) -> Result<(Vec<AgentProfile>, NetworkModel, TimeGrid)> {
        let grid = TimeGrid::new(self.grid_days())?;
        let days = grid.len();
        let mut by_agent: BTreeMap<usize, Vec<&FaultRecord>> = BTreeMap::new();
        for f in &self.faults {
            by_agent.entry(f.agent).or_default().push(f);
        }
        let mut agents = Vec::with_capacity(self.units.len());
        for u in &self.units {
            let mut records = by_agent.remove(&u.agent).unwrap_or_default();
            records.sort_by_key(|f| f.event);
            for (k, f) in records.iter().enumerate() {
                if f.event != k + 1 {
                    return Err(Error::InvalidInput(format!(
                        "agent {}: fault events must be numbered 1.., found {} at position {}",
                        u.agent,
                        f.event,
                        k + 1
                    )));
                }
            }
            let events = records
                .iter()
                .map(|f| FaultEvent::new(f.t1, f.tau, f.sigma, f.horizon_start, f.horizon_end))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::InvalidInput(format!("agent {}: {e}", u.agent)))?;
            let cost = vec![u.marginal_cost * u.q_max; days];
            agents.push(AgentProfile::new(
                u.agent,
                u.bus,
                u.q_min,
                u.q_max,
                cost,
                u.repair_time,
                u.alpha,
                u.gamma,
                events,
            )?);
        }
        if let Some(agent) = by_agent.keys().next() {
            return Err(Error::InvalidInput(format!("fault events for unknown agent {agent}")));
        }
        let total: f64 = self.buses.iter().map(|b| b.participation).sum();
        if !(total > 0.0) || self.buses.iter().any(|b| !(b.participation >= 0.0)) {
            return Err(Error::InvalidInput(
                "bus participation factors must be non-negative with a positive sum".into(),
            ));
        }
        let load = self
            .buses
            .iter()
            .map(|b| {
                (1..=days)
                    .map(|t| self.load_on(t).load_mw * b.participation / total)
                    .collect()
            })
            .collect();
        let price = (1..=days).map(|t| self.load_on(t).price).collect();
        let lines = self
            .lines
            .iter()
            .map(|l| Line {
                from: l.from,
                to: l.to,
                susceptance: l.susceptance_pu,
                capacity: l.capacity_mw,
            })
            .collect();
        let unit_map = self.units.iter().map(|u| (u.agent, u.bus)).collect();
        let net = NetworkModel::new(
            self.base_mva,
            self.buses.iter().map(|b| b.bus_id).collect(),
            lines,
            unit_map,
            load,
            price,
        )?;
        Ok((agents, net, grid))
    }

    /// Copy with every RUL spread mapped affinely from the nominal band
    /// `[5, 7]` onto `[lo, hi]`, and fault horizons rebuilt from the new
    /// spreads.
    pub fn with_sigma_range(&self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Config(format!("invalid sigma range [{lo}, {hi}]")));
        }
        let mut out = self.clone();
        let mut by_agent: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, f) in out.faults.iter().enumerate() {
            by_agent.entry(f.agent).or_default().push(i);
        }
        for idx in by_agent.values_mut() {
            idx.sort_by_key(|&i| out.faults[i].event);
            let triples: Vec<(Day, Day, f64)> = idx
                .iter()
                .map(|&i| {
                    let f = &out.faults[i];
                    (f.t1, f.tau, remap_sigma(f.sigma, lo, hi))
                })
                .collect();
            let events = default_horizons(&triples)?;
            for (&i, e) in idx.iter().zip(events) {
                let f = &mut out.faults[i];
                f.sigma = e.rul_std;
                f.horizon_start = e.horizon_start;
                f.horizon_end = e.horizon_end;
            }
        }
        Ok(out)
    }
}

/// Nominal spread band the bundled thresholds were drawn from.
pub const NOMINAL_SIGMA: (f64, f64) = (5.0, 7.0);

pub fn remap_sigma(sigma: f64, lo: f64, hi: f64) -> f64 {
    let (a, b) = NOMINAL_SIGMA;
    (lo + (sigma - a) * (hi - lo) / (b - a)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset {
            base_mva: 100.0,
            buses: vec![
                BusRecord {
                    bus_id: 1,
                    participation: 0.25,
                },
                BusRecord {
                    bus_id: 2,
                    participation: 0.75,
                },
            ],
            lines: vec![LineRecord {
                from: 1,
                to: 2,
                susceptance_pu: 12.5,
                capacity_mw: 300.0,
            }],
            units: vec![
                UnitRecord {
                    agent: 1,
                    bus: 1,
                    q_min: 0.0,
                    q_max: 200.0,
                    marginal_cost: 17.5,
                    repair_time: 2,
                    alpha: 1e-3,
                    gamma: GammaSpec::Auto,
                },
                UnitRecord {
                    agent: 2,
                    bus: 2,
                    q_min: 10.0,
                    q_max: 150.0,
                    marginal_cost: 0.1 + 0.2,
                    repair_time: 1,
                    alpha: 2.5e-7,
                    gamma: GammaSpec::Fixed(1234.5),
                },
            ],
            faults: vec![
                FaultRecord {
                    agent: 1,
                    event: 1,
                    t1: 2,
                    tau: 5,
                    sigma: 1.0,
                    horizon_start: 1,
                    horizon_end: 8,
                },
                FaultRecord {
                    agent: 2,
                    event: 1,
                    t1: 3,
                    tau: 6,
                    sigma: 0.7,
                    horizon_start: 1,
                    horizon_end: 6,
                },
            ],
            load: (1..=5)
                .map(|d| LoadRecord {
                    day: d,
                    load_mw: 100.0 + d as f64 / 3.0,
                    price: 30.0 + d as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        ds.write_dir(dir.path(), &DataFiles::default()).unwrap();
        let back = Dataset::read_dir(dir.path(), &DataFiles::default(), 100.0).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.build().unwrap(), ds.build().unwrap());
    }

    #[test]
    fn load_wraps_past_the_series() {
        let (agents, net, grid) = tiny().build().unwrap();
        assert_eq!(grid.len(), 8);
        assert_eq!(net.system_load(6), net.system_load(1));
        assert!((net.load_at(1, 2) - 0.75 * (100.0 + 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(agents[1].cost(4), (0.1 + 0.2) * 150.0);
    }

    #[test]
    fn truncated_file_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        tiny().write_dir(dir.path(), &DataFiles::default()).unwrap();
        let path = dir.path().join("lines.tsv");
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.trim_end().rsplit_once('\t').unwrap().0).unwrap();
        match Dataset::read_dir(dir.path(), &DataFiles::default(), 100.0) {
            Err(Error::Parse { file, row, .. }) => {
                assert!(file.ends_with("lines.tsv"));
                assert_eq!(row, 3);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_field_names_the_column() {
        let dir = tempfile::tempdir().unwrap();
        tiny().write_dir(dir.path(), &DataFiles::default()).unwrap();
        let path = dir.path().join("units.tsv");
        let text = fs::read_to_string(&path).unwrap().replace("1234.5", "lots");
        fs::write(&path, text).unwrap();
        match Dataset::read_dir(dir.path(), &DataFiles::default(), 100.0) {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (4, 8)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_line_is_required() {
        let dir = tempfile::tempdir().unwrap();
        tiny().write_dir(dir.path(), &DataFiles::default()).unwrap();
        let path = dir.path().join("buses.tsv");
        let text = fs::read_to_string(&path).unwrap().replace(" v1", " v9");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            Dataset::read_dir(dir.path(), &DataFiles::default(), 100.0),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn sigma_remap() {
        assert_eq!(remap_sigma(5.0, 1.0, 3.0), 1.0);
        assert_eq!(remap_sigma(7.0, 10.0, 12.0), 12.0);
        assert_eq!(remap_sigma(6.0, 5.0, 7.0), 6.0);
        let ds = tiny().with_sigma_range(5.0, 7.0).unwrap();
        // the middle band keeps spreads, windows follow the default rule
        assert_eq!(ds.faults[0].sigma, 1.0);
        assert_eq!((ds.faults[0].horizon_start, ds.faults[0].horizon_end), (1, 9));
        let wide = tiny().with_sigma_range(10.0, 12.0).unwrap();
        assert!((wide.faults[1].sigma - 5.7).abs() < 1e-12);
    }
}
