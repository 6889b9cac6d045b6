//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [data]
//! dir = "data/ieee39"        # omit to use the built-in 39-bus case
//!
//! [run]
//! scenarios = 50
//! seed = 42
//! gamma = "auto"             # "file", "auto" or a positive number
//!
//! [sweep]
//! sigma_ranges = [[1, 3], [5, 7], [10, 12]]
//! scenario_counts = [10, 50, 100]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agent_opt::DeteriorationForm;
use crate::domain::GammaSpec;
use crate::error::{Error, Result};
use crate::io::dataset::DataFiles;
use crate::negotiation::{NegotiationConfig, DEFAULT_MAX_ITERATIONS};
use crate::scenarios::SamplingScheme;
use crate::tso_opt::{AcceptanceMode, TsoOptions, DEFAULT_EPSILON};

/// Which γ the agents negotiate with.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum GammaMode {
    /// Whatever each unit row says.
    #[default]
    File,
    /// Every agent gets its own auto bound.
    Auto,
    /// One value for every agent.
    Fixed(f64),
}

impl std::fmt::Display for GammaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GammaMode::File => f.write_str("file"),
            GammaMode::Auto => f.write_str("auto"),
            GammaMode::Fixed(g) => write!(f, "{g}"),
        }
    }
}

impl std::str::FromStr for GammaMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("file") {
            return Ok(GammaMode::File);
        }
        match s.parse::<GammaSpec>()? {
            GammaSpec::Auto => Ok(GammaMode::Auto),
            GammaSpec::Fixed(g) => Ok(GammaMode::Fixed(g)),
        }
    }
}

impl GammaMode {
    pub fn apply(self, file: GammaSpec) -> GammaSpec {
        match self {
            GammaMode::File => file,
            GammaMode::Auto => GammaSpec::Auto,
            GammaMode::Fixed(g) => GammaSpec::Fixed(g),
        }
    }
}

impl Serialize for GammaMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GammaMode::Fixed(g) => s.serialize_f64(*g),
            other => s.collect_str(other),
        }
    }
}

impl<'de> Deserialize<'de> for GammaMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(g) => format!("{g}").parse(),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory of the five data tables; relative paths are taken from
    /// the config file's directory. `None` selects the built-in case.
    pub dir: Option<PathBuf>,
    pub base_mva: f64,
    pub buses: PathBuf,
    pub lines: PathBuf,
    pub units: PathBuf,
    pub faults: PathBuf,
    pub load: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        let files = DataFiles::default();
        Self {
            dir: None,
            base_mva: 100.0,
            buses: files.buses,
            lines: files.lines,
            units: files.units,
            faults: files.faults,
            load: files.load,
        }
    }
}

impl DataConfig {
    pub fn files(&self) -> DataFiles {
        DataFiles {
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            units: self.units.clone(),
            faults: self.faults.clone(),
            load: self.load.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenarios: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub gamma: GammaMode,
    pub acceptance: AcceptanceMode,
    pub deterioration: DeteriorationForm,
    pub sampling: SamplingScheme,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenarios: 50,
            seed: 42,
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            gamma: GammaMode::File,
            acceptance: AcceptanceMode::default(),
            deterioration: DeteriorationForm::default(),
            sampling: SamplingScheme::MonteCarlo,
        }
    }
}

impl RunConfig {
    pub fn negotiation(&self) -> NegotiationConfig {
        NegotiationConfig {
            max_iterations: self.max_iterations,
            tso: TsoOptions {
                epsilon: self.epsilon,
                mode: self.acceptance,
                ..TsoOptions::default()
            },
            form: self.deterioration,
            dispatch: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Target `[lo, hi]` spread bands; the dataset's nominal band maps onto each.
    pub sigma_ranges: Vec<[f64; 2]>,
    pub scenario_counts: Vec<usize>,
    pub sampling: SamplingScheme,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigma_ranges: vec![[1.0, 3.0], [5.0, 7.0], [10.0, 12.0]],
            scenario_counts: vec![10, 50, 100],
            sampling: SamplingScheme::Stratified,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub run: RunConfig,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config file and anchors a relative data directory at it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(dir) = &cfg.data.dir {
            if dir.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.data.dir = Some(base.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn check(&self) -> Result<()> {
        let r = &self.run;
        if r.scenarios == 0 {
            return Err(Error::Config("run.scenarios must be at least 1".into()));
        }
        if !(r.epsilon > 0.0 && r.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "run.epsilon must be positive, got {}",
                r.epsilon
            )));
        }
        if r.max_iterations == 0 {
            return Err(Error::Config("run.max_iterations must be at least 1".into()));
        }
        if !(self.data.base_mva > 0.0 && self.data.base_mva.is_finite()) {
            return Err(Error::Config("data.base_mva must be positive".into()));
        }
        for &[lo, hi] in &self.sweep.sigma_ranges {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::Config(format!("sweep.sigma_ranges: invalid band [{lo}, {hi}]")));
            }
        }
        if self.sweep.scenario_counts.contains(&0) {
            return Err(Error::Config("sweep.scenario_counts entries must be at least 1".into()));
        }
        Ok(())
    }
}
