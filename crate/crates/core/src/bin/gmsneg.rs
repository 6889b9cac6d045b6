use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use gmsneg::agent_opt::DeteriorationForm;
use gmsneg::io::config::{ExperimentConfig, GammaMode};
use gmsneg::io::dataset::DataFiles;
use gmsneg::io::experiment::{load_dataset, run_baselines, run_replication, run_sweep, Prepared};
use gmsneg::io::ieee39;
use gmsneg::io::report::{emit_report, RunReport};
use gmsneg::scenarios::SamplingScheme;
use gmsneg::tso_opt::AcceptanceMode;

/// Negotiated generation-maintenance scheduling.
#[derive(Parser)]
#[command(name = "gmsneg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the dataset against the modelling assumptions.
    Validate(Common),
    /// Run the negotiation and the baselines and write the report.
    Run(WithOutput),
    /// Evaluate the condition-based and corrective schedules only.
    Baseline(WithOutput),
    /// Run the negotiation for every configured (spread band, scenario count) pair.
    Sweep(WithOutput),
    /// Write the built-in 39-bus tables to a directory.
    #[command(hide = true)]
    ExportData { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Directory holding buses.tsv, lines.tsv, units.tsv, faults.tsv and load.tsv.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    base_mva: Option<f64>,
    /// Scenario paths per fault event.
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Acceptance threshold on the surviving scenario mass.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// `file`, `auto` or a positive number.
    #[arg(long)]
    gamma: Option<GammaMode>,
    /// `block-atomic` or `per-timestep`.
    #[arg(long)]
    acceptance: Option<AcceptanceMode>,
    /// `as-printed` or `expectation`.
    #[arg(long)]
    deterioration: Option<DeteriorationForm>,
    /// `monte-carlo` or `stratified`.
    #[arg(long)]
    sampling: Option<SamplingScheme>,
    /// Spread bands for `sweep`, e.g. `1:3,5:7,10:12`.
    #[arg(long, value_delimiter = ',', value_parser = parse_band)]
    sigma_ranges: Option<Vec<[f64; 2]>>,
    /// Scenario counts for `sweep`, e.g. `10,50,100`.
    #[arg(long, value_delimiter = ',')]
    scenario_counts: Option<Vec<usize>>,
    #[arg(long)]
    sweep_sampling: Option<SamplingScheme>,
}

#[derive(Args)]
struct WithOutput {
    #[command(flatten)]
    common: Common,
    /// Report directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

fn parse_band(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number `{hi}`"))?;
    Ok([lo, hi])
}

impl Common {
    fn config(&self) -> gmsneg::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.data_dir {
            cfg.data.dir = Some(d.clone());
        }
        let r = &mut cfg.run;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(cfg.data.base_mva, self.base_mva);
        set!(r.scenarios, self.scenarios);
        set!(r.seed, self.seed);
        set!(r.epsilon, self.epsilon);
        set!(r.max_iterations, self.max_iterations);
        set!(r.gamma, self.gamma);
        set!(r.acceptance, self.acceptance);
        set!(r.deterioration, self.deterioration);
        set!(r.sampling, self.sampling);
        set!(cfg.sweep.sigma_ranges, self.sigma_ranges);
        set!(cfg.sweep.scenario_counts, self.scenario_counts);
        set!(cfg.sweep.sampling, self.sweep_sampling);
        cfg.check()?;
        Ok(cfg)
    }
}

fn validate(common: &Common) -> gmsneg::Result<ExitCode> {
    let cfg = common.config()?;
    let ds = load_dataset(&cfg)?;
    let prepared = Prepared::from_run(&ds, &cfg.run)?;
    let report = prepared.validate()?;
    let mark = |ok: bool| if ok { "pass" } else { "WARN" };
    println!(
        "assumption 1: {} ({})",
        mark(report.assumption1.passed),
        report.assumption1.detail
    );
    println!(
        "assumption 2: {} ({})",
        mark(report.assumption2.passed),
        report.assumption2.detail
    );
    for s in &report.structural {
        println!("structural: {s}");
    }
    println!(
        "{} agents, {} buses, {} lines, {} days",
        prepared.agents.len(),
        prepared.net.buses.len(),
        prepared.net.lines.len(),
        prepared.grid.len()
    );
    Ok(if report.structural.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn write(out: &Path, report: &RunReport) -> gmsneg::Result<()> {
    for p in emit_report(out, report)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn run(args: &WithOutput) -> gmsneg::Result<ExitCode> {
    let cfg = args.common.config()?;
    let ds = load_dataset(&cfg)?;
    let started = Instant::now();
    let rep = run_replication(&ds, &cfg.run)?;
    let baselines = run_baselines(&rep.prepared, &rep.negotiation)?;
    eprintln!("negotiation and baselines took {:.2?}", started.elapsed());
    let st = &rep.state;
    println!(
        "{} after {} iterations; ledger sums {:?}",
        if st.converged { "converged" } else { "iteration cap hit" },
        st.iteration_count(),
        rep.budget.sums
    );
    for v in &rep.budget.violations {
        println!("budget audit: {v}");
    }
    for (id, i) in &rep.rationality.negative {
        println!("rationality: agent {id} has a negative objective at iteration {i}");
    }
    let passed = rep.audits_passed();
    write(
        &args.out,
        &RunReport {
            config: cfg,
            replication: Some(rep),
            baselines: Some(baselines),
            sweep: None,
        },
    )?;
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn baseline(args: &WithOutput) -> gmsneg::Result<ExitCode> {
    let cfg = args.common.config()?;
    let ds = load_dataset(&cfg)?;
    let prepared = Prepared::from_run(&ds, &cfg.run)?;
    let report = run_baselines(&prepared, &cfg.run.negotiation())?;
    for row in &report.rows {
        if !row.rejected_days.is_empty() {
            println!(
                "{} schedule of agent {} would be refused on {} days",
                row.kind.name(),
                row.agent,
                row.rejected_days.len()
            );
        }
    }
    write(
        &args.out,
        &RunReport {
            config: cfg,
            replication: None,
            baselines: Some(report),
            sweep: None,
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: &WithOutput) -> gmsneg::Result<ExitCode> {
    let cfg = args.common.config()?;
    let ds = load_dataset(&cfg)?;
    let report = run_sweep(&ds, &cfg)?;
    for c in &report.cells {
        eprintln!(
            "sigma [{}, {}] S={}: {} iterations{} in {:.2?}",
            c.sigma_lo,
            c.sigma_hi,
            c.scenarios,
            c.iterations,
            if c.converged { "" } else { " (cap hit)" },
            c.wall
        );
        println!(
            "sigma [{}, {}] S={}: total {}",
            c.sigma_lo, c.sigma_hi, c.scenarios, c.total_reward
        );
    }
    write(
        &args.out,
        &RunReport {
            config: cfg,
            replication: None,
            baselines: None,
            sweep: Some(report),
        },
    )?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(c) => validate(c),
        Command::Run(a) => run(a),
        Command::Baseline(a) => baseline(a),
        Command::Sweep(a) => sweep(a),
        Command::ExportData { dir } => ieee39::dataset()
            .and_then(|ds| ds.write_dir(dir, &DataFiles::default()))
            .map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
