//! Python bindings. Configs, datasets and full runs; everything heavy is
//! computed with the GIL released.

use std::path::PathBuf;
use std::str::FromStr;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gmsneg::io::config::{ExperimentConfig, GammaMode};
use gmsneg::io::dataset::{DataFiles, Dataset as CoreDataset};
use gmsneg::io::experiment::{self, BaselineReport, Prepared, Replication as CoreReplication};
use gmsneg::io::ieee39;
use gmsneg::io::report::{emit_report, RunReport};

create_exception!(
    pygmsneg,
    GmsnegError,
    PyException,
    "Error raised by the negotiation engine."
);

fn err(e: gmsneg::Error) -> PyErr {
    GmsnegError::new_err(e.to_string())
}

fn parse<T: FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

/// Experiment configuration; mirrors the TOML file and the CLI flags.
#[pyclass(name = "Config", module = "pygmsneg", from_py_object)]
#[derive(Clone, Default)]
struct Config {
    inner: ExperimentConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (path=None))]
    fn new(path: Option<PathBuf>) -> PyResult<Self> {
        let inner = match path {
            Some(p) => ExperimentConfig::load(&p).map_err(err)?,
            None => ExperimentConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::from_toml(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Raises if any value is out of range.
    fn check(&self) -> PyResult<()> {
        self.inner.check().map_err(err)
    }

    #[getter]
    fn data_dir(&self) -> Option<PathBuf> {
        self.inner.data.dir.clone()
    }
    #[setter]
    fn set_data_dir(&mut self, dir: Option<PathBuf>) {
        self.inner.data.dir = dir;
    }

    #[getter]
    fn scenarios(&self) -> usize {
        self.inner.run.scenarios
    }
    #[setter]
    fn set_scenarios(&mut self, v: usize) {
        self.inner.run.scenarios = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.run.seed
    }
    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.run.seed = v;
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.run.epsilon
    }
    #[setter]
    fn set_epsilon(&mut self, v: f64) {
        self.inner.run.epsilon = v;
    }

    #[getter]
    fn max_iterations(&self) -> usize {
        self.inner.run.max_iterations
    }
    #[setter]
    fn set_max_iterations(&mut self, v: usize) {
        self.inner.run.max_iterations = v;
    }

    /// `"file"`, `"auto"` or a number as text.
    #[getter]
    fn gamma(&self) -> String {
        self.inner.run.gamma.to_string()
    }
    #[setter]
    fn set_gamma(&mut self, v: &str) -> PyResult<()> {
        self.inner.run.gamma = parse::<GammaMode>(v)?;
        Ok(())
    }

    #[getter]
    fn acceptance(&self) -> String {
        self.inner.run.acceptance.to_string()
    }
    #[setter]
    fn set_acceptance(&mut self, v: &str) -> PyResult<()> {
        self.inner.run.acceptance = parse(v)?;
        Ok(())
    }

    #[getter]
    fn deterioration(&self) -> String {
        self.inner.run.deterioration.to_string()
    }
    #[setter]
    fn set_deterioration(&mut self, v: &str) -> PyResult<()> {
        self.inner.run.deterioration = parse(v)?;
        Ok(())
    }

    #[getter]
    fn sampling(&self) -> String {
        self.inner.run.sampling.to_string()
    }
    #[setter]
    fn set_sampling(&mut self, v: &str) -> PyResult<()> {
        self.inner.run.sampling = parse(v)?;
        Ok(())
    }

    #[getter]
    fn sigma_ranges(&self) -> Vec<(f64, f64)> {
        self.inner.sweep.sigma_ranges.iter().map(|b| (b[0], b[1])).collect()
    }
    #[setter]
    fn set_sigma_ranges(&mut self, v: Vec<(f64, f64)>) {
        self.inner.sweep.sigma_ranges = v.into_iter().map(|(lo, hi)| [lo, hi]).collect();
    }

    #[getter]
    fn scenario_counts(&self) -> Vec<usize> {
        self.inner.sweep.scenario_counts.clone()
    }
    #[setter]
    fn set_scenario_counts(&mut self, v: Vec<usize>) {
        self.inner.sweep.scenario_counts = v;
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(scenarios={}, seed={}, gamma={:?})",
            self.inner.run.scenarios,
            self.inner.run.seed,
            self.inner.run.gamma.to_string()
        )
    }
}

/// Raw tables of a case.
#[pyclass(name = "Dataset", module = "pygmsneg", from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// The built-in 39-bus case.
    #[staticmethod]
    fn ieee39() -> PyResult<Self> {
        Ok(Self {
            inner: ieee39::dataset().map_err(err)?,
        })
    }

    /// Tables named by the config, with its γ mode applied.
    #[staticmethod]
    fn load(config: &Config) -> PyResult<Self> {
        Ok(Self {
            inner: experiment::load_dataset(&config.inner).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (dir, base_mva=100.0))]
    fn read_dir(dir: PathBuf, base_mva: f64) -> PyResult<Self> {
        Ok(Self {
            inner: CoreDataset::read_dir(&dir, &DataFiles::default(), base_mva).map_err(err)?,
        })
    }

    fn write_dir(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.write_dir(&dir, &DataFiles::default()).map_err(err)
    }

    fn with_sigma_range(&self, lo: f64, hi: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_sigma_range(lo, hi).map_err(err)?,
        })
    }

    #[getter]
    fn num_units(&self) -> usize {
        self.inner.units.len()
    }

    #[getter]
    fn num_buses(&self) -> usize {
        self.inner.buses.len()
    }

    #[getter]
    fn num_lines(&self) -> usize {
        self.inner.lines.len()
    }

    #[getter]
    fn num_days(&self) -> usize {
        self.inner.grid_days()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(units={}, buses={}, lines={}, days={})",
            self.inner.units.len(),
            self.inner.buses.len(),
            self.inner.lines.len(),
            self.inner.grid_days()
        )
    }
}

/// A finished negotiation with its audits.
#[pyclass(name = "Replication", module = "pygmsneg")]
struct Replication {
    inner: CoreReplication,
    config: ExperimentConfig,
}

impl Replication {
    fn snapshot(&self, iteration: usize) -> PyResult<&gmsneg::negotiation::IterationSnapshot> {
        let st = &self.inner.state;
        if iteration == 0 || iteration > st.iteration_count() {
            return Err(PyValueError::new_err(format!(
                "iteration must be in 1..={}, got {iteration}",
                st.iteration_count()
            )));
        }
        Ok(&st.iterations[iteration - 1])
    }
}

fn baseline_dicts<'py>(py: Python<'py>, report: &BaselineReport) -> PyResult<Vec<Bound<'py, PyDict>>> {
    report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("agent", r.agent)?;
            d.set_item("case", r.kind.name())?;
            d.set_item("blocks", r.blocks.iter().map(|b| (b.start, b.len)).collect::<Vec<_>>())?;
            d.set_item("reward", r.reward)?;
            d.set_item("deterioration", r.deterioration)?;
            d.set_item("value", r.value())?;
            d.set_item("rejected_days", r.rejected_days.clone())?;
            Ok(d)
        })
        .collect()
}

#[pymethods]
impl Replication {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.state.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.state.iteration_count()
    }

    #[getter]
    fn agent_ids(&self) -> Vec<usize> {
        self.inner.state.agent_ids.clone()
    }

    /// Penalty weight actually used per agent.
    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.state.gamma.clone()
    }

    /// Settled incentive total per iteration.
    #[getter]
    fn ledger_sums(&self) -> Vec<f64> {
        self.inner.budget.sums.clone()
    }

    #[getter]
    fn total_reward(&self) -> f64 {
        self.inner.total_reward
    }

    #[getter]
    fn audits_passed(&self) -> bool {
        self.inner.audits_passed()
    }

    #[getter]
    fn budget_violations(&self) -> Vec<String> {
        self.inner.budget.violations.clone()
    }

    /// Ids of agents that were refused at least one day.
    #[getter]
    fn penalized_agents(&self) -> Vec<usize> {
        let st = &self.inner.state;
        st.penalized().iter().map(|&n| st.agent_ids[n]).collect()
    }

    /// `{"assumption1": (passed, detail), "assumption2": ..., "structural": [...]}`
    fn validation<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let v = &self.inner.validation;
        let d = PyDict::new(py);
        d.set_item("assumption1", (v.assumption1.passed, v.assumption1.detail.clone()))?;
        d.set_item("assumption2", (v.assumption2.passed, v.assumption2.detail.clone()))?;
        d.set_item("structural", v.structural.clone())?;
        Ok(d)
    }

    /// Bid lattice `[agent][day]` of a 1-based iteration.
    fn bids(&self, iteration: usize) -> PyResult<Vec<Vec<bool>>> {
        Ok(self.snapshot(iteration)?.bids.clone())
    }

    fn accepted(&self, iteration: usize) -> PyResult<Vec<Vec<bool>>> {
        Ok(self.snapshot(iteration)?.accepted.clone())
    }

    /// `(start, length)` blocks per agent.
    fn blocks(&self, iteration: usize) -> PyResult<Vec<Vec<(usize, usize)>>> {
        Ok(self
            .snapshot(iteration)?
            .decisions
            .iter()
            .map(|d| d.blocks.iter().map(|b| (b.start, b.len)).collect())
            .collect())
    }

    /// Condition-based and corrective schedules on the same scenarios.
    fn baselines<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let report = py
            .detach(|| experiment::run_baselines(&self.inner.prepared, &self.inner.negotiation))
            .map_err(err)?;
        baseline_dicts(py, &report)
    }

    /// Writes the report files (with baselines) and returns their paths.
    fn write_report(&self, py: Python<'_>, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        py.detach(|| {
            let baselines = experiment::run_baselines(&self.inner.prepared, &self.inner.negotiation)?;
            emit_report(
                &dir,
                &RunReport {
                    config: self.config.clone(),
                    replication: Some(self.inner.clone()),
                    baselines: Some(baselines),
                    sweep: None,
                },
            )
        })
        .map_err(err)
    }
}

/// Assumption checks for the configured dataset and scenarios.
#[pyfunction]
fn validate<'py>(py: Python<'py>, config: &Config) -> PyResult<Bound<'py, PyDict>> {
    let report = py
        .detach(|| {
            let ds = experiment::load_dataset(&config.inner)?;
            Prepared::from_run(&ds, &config.inner.run)?.validate()
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("assumption1", (report.assumption1.passed, report.assumption1.detail))?;
    d.set_item("assumption2", (report.assumption2.passed, report.assumption2.detail))?;
    d.set_item("structural", report.structural)?;
    Ok(d)
}

/// Runs one negotiation. Uses `dataset` if given, else the config's data.
#[pyfunction]
#[pyo3(signature = (config, dataset=None))]
fn run(py: Python<'_>, config: &Config, dataset: Option<&Dataset>) -> PyResult<Replication> {
    config.inner.check().map_err(err)?;
    let inner = py
        .detach(|| {
            let ds = match dataset {
                Some(d) => d.inner.clone(),
                None => experiment::load_dataset(&config.inner)?,
            };
            experiment::run_replication(&ds, &config.inner.run)
        })
        .map_err(err)?;
    Ok(Replication {
        inner,
        config: config.inner.clone(),
    })
}

/// One dict per `(sigma band, scenario count)` cell.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, config: &Config) -> PyResult<Vec<Bound<'py, PyDict>>> {
    config.inner.check().map_err(err)?;
    let report = py
        .detach(|| {
            let ds = experiment::load_dataset(&config.inner)?;
            experiment::run_sweep(&ds, &config.inner)
        })
        .map_err(err)?;
    report
        .cells
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("sigma_range", (c.sigma_lo, c.sigma_hi))?;
            d.set_item("scenarios", c.scenarios)?;
            d.set_item("iterations", c.iterations)?;
            d.set_item("converged", c.converged)?;
            d.set_item("total_reward", c.total_reward)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn pygmsneg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GmsnegError", m.py().get_type::<GmsnegError>())?;
    m.add_class::<Config>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Replication>()?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
