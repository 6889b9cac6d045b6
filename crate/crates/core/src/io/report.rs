//! Result files. Every file starts with a `# gmsneg <kind> v1` line and
//! depends only on the config and seed.
//!
//! | file             | rows                                          |
//! |------------------|-----------------------------------------------|
//! | `schedules.tsv`  | one per iteration, agent and maintenance block |
//! | `incentives.tsv` | one per agent plus a `sum` row; a column per iteration |
//! | `rewards.tsv`    | one per agent; objective and realized value per iteration |
//! | `capacity.tsv`   | one per iteration and day                     |
//! | `baselines.tsv`  | one per agent and schedule kind               |
//! | `sweep.tsv`      | one per sweep cell                            |
//! | `summary.txt`    | `key = value` lines                           |
//! | `events.jsonl`   | one JSON object per iteration                 |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::agent_opt::Block;
use crate::error::{Error, Result};
use crate::io::config::ExperimentConfig;
use crate::io::dataset::FORMAT_VERSION;
use crate::io::experiment::{BaselineReport, Replication, SweepReport};
use crate::negotiation::event_log;

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub replication: Option<Replication>,
    pub baselines: Option<BaselineReport>,
    pub sweep: Option<SweepReport>,
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn table(kind: &str, header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut out = format!("# gmsneg {kind} v{FORMAT_VERSION}\n").into_bytes();
    {
        let mut w = csv::WriterBuilder::new().delimiter(b'\t').from_writer(&mut out);
        let fail = |e: csv::Error| Error::InvalidInput(format!("{kind}: {e}"));
        w.write_record(header).map_err(fail)?;
        for r in rows {
            w.write_record(r).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("{kind}: {e}")))?;
    }
    Ok(String::from_utf8(out).expect("table text is utf-8"))
}

fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn format_blocks(blocks: &[Block]) -> String {
    let parts: Vec<String> = blocks.iter().map(|b| format!("{}+{}", b.start, b.len)).collect();
    parts.join(";")
}

fn format_days(days: &[usize]) -> String {
    if days.is_empty() {
        return "-".into();
    }
    let parts: Vec<String> = days.iter().map(|d| d.to_string()).collect();
    parts.join(";")
}

pub fn schedules_table(rep: &Replication) -> Result<String> {
    let mut rows = Vec::new();
    for s in &rep.state.iterations {
        for (n, d) in s.decisions.iter().enumerate() {
            let agent = &rep.prepared.agents[n];
            for b in &d.blocks {
                let accepted = b.days().filter(|&t| s.accepted[n][t - 1]).count();
                rows.push(vec![
                    s.iteration.to_string(),
                    d.agent.to_string(),
                    (agent.event_at(b.start).map_or(0, |k| k + 1)).to_string(),
                    b.start.to_string(),
                    b.end().to_string(),
                    b.len.to_string(),
                    accepted.to_string(),
                ]);
            }
        }
    }
    table(
        "schedules",
        &cols(&["iteration", "agent", "event", "start", "end", "days", "accepted_days"]),
        &rows,
    )
}

pub fn incentives_table(rep: &Replication) -> Result<String> {
    let st = &rep.state;
    let k = st.iteration_count();
    let mut header = cols(&["agent", "gamma"]);
    header.extend((1..=k).map(|i| format!("iteration_{i}")));
    let mut rows: Vec<Vec<String>> = st
        .agent_ids
        .iter()
        .enumerate()
        .map(|(n, id)| {
            let mut r = vec![id.to_string(), st.gamma[n].to_string()];
            r.extend((1..=k).map(|i| st.ledger.agent_total(i, n).to_string()));
            r
        })
        .collect();
    let mut sum = vec!["sum".to_string(), "-".to_string()];
    sum.extend(st.ledger.sums().iter().map(|s| s.to_string()));
    rows.push(sum);
    table("incentives", &header, &rows)
}

pub fn rewards_table(rep: &Replication) -> Result<String> {
    let k = rep.state.iteration_count();
    let mut header = cols(&["agent", "penalized"]);
    header.extend((1..=k).map(|i| format!("objective_{i}")));
    header.extend((1..=k).map(|i| format!("realized_{i}")));
    let rows: Vec<Vec<String>> = rep
        .rationality
        .agents
        .iter()
        .map(|a| {
            let mut r = vec![a.agent.to_string(), a.penalized.to_string()];
            r.extend(a.objective.iter().map(|v| v.to_string()));
            r.extend(a.realized.iter().map(|v| v.to_string()));
            r
        })
        .collect();
    table("rewards", &header, &rows)
}

/// Capacity of the units that are not down for maintenance, under the
/// bids and under the accepted schedule.
pub fn capacity_table(rep: &Replication) -> Result<String> {
    let p = &rep.prepared;
    let mut rows = Vec::new();
    for s in &rep.state.iterations {
        for t in p.grid.days() {
            let (mut bid, mut acc) = (0.0, 0.0);
            for (n, a) in p.agents.iter().enumerate() {
                if !s.bids[n][t - 1] {
                    bid += a.q_max;
                }
                if !(s.bids[n][t - 1] && s.accepted[n][t - 1]) {
                    acc += a.q_max;
                }
            }
            rows.push(vec![
                s.iteration.to_string(),
                t.to_string(),
                p.net.system_load(t).to_string(),
                bid.to_string(),
                acc.to_string(),
            ]);
        }
    }
    table(
        "capacity",
        &cols(&["iteration", "day", "load_mw", "bid_capacity_mw", "accepted_capacity_mw"]),
        &rows,
    )
}

pub fn baselines_table(rep: Option<&Replication>, base: &BaselineReport) -> Result<String> {
    let mut rows = Vec::new();
    if let Some(rep) = rep {
        let last = rep.state.last().expect("at least one round runs");
        let values = rep.prepared.values(&last.bids, &rep.negotiation)?;
        for (n, d) in last.decisions.iter().enumerate() {
            let rejected: Vec<usize> = (1..=last.bids[n].len())
                .filter(|&t| last.bids[n][t - 1] && !last.accepted[n][t - 1])
                .collect();
            let (r, det) = values[n];
            rows.push(vec![
                d.agent.to_string(),
                "negotiation".into(),
                format_blocks(&d.blocks),
                r.to_string(),
                det.to_string(),
                (r - det).to_string(),
                format_days(&rejected),
            ]);
        }
    }
    for row in &base.rows {
        rows.push(vec![
            row.agent.to_string(),
            row.kind.name().into(),
            format_blocks(&row.blocks),
            row.reward.to_string(),
            row.deterioration.to_string(),
            row.value().to_string(),
            format_days(&row.rejected_days),
        ]);
    }
    table(
        "baselines",
        &cols(&[
            "agent",
            "case",
            "blocks",
            "reward",
            "deterioration",
            "value",
            "rejected_days",
        ]),
        &rows,
    )
}

pub fn sweep_table(sweep: &SweepReport) -> Result<String> {
    let rows: Vec<Vec<String>> = sweep
        .cells
        .iter()
        .map(|c| {
            vec![
                c.sigma_lo.to_string(),
                c.sigma_hi.to_string(),
                c.scenarios.to_string(),
                c.iterations.to_string(),
                c.converged.to_string(),
                c.total_reward.to_string(),
            ]
        })
        .collect();
    table(
        "sweep",
        &cols(&[
            "sigma_lo",
            "sigma_hi",
            "scenarios",
            "iterations",
            "converged",
            "total_reward",
        ]),
        &rows,
    )
}

pub fn summary_text(report: &RunReport) -> String {
    let mut s = format!("# gmsneg summary v{FORMAT_VERSION}\n");
    let run = &report.config.run;
    let data = match &report.config.data.dir {
        Some(d) => d.display().to_string(),
        None => "built-in ieee39".into(),
    };
    let _ = writeln!(s, "data = {data}");
    let _ = writeln!(s, "scenarios = {}", run.scenarios);
    let _ = writeln!(s, "seed = {}", run.seed);
    let _ = writeln!(s, "epsilon = {}", run.epsilon);
    let _ = writeln!(s, "max_iterations = {}", run.max_iterations);
    let _ = writeln!(s, "gamma_mode = {}", run.gamma);
    let _ = writeln!(s, "acceptance = {}", run.acceptance);
    let _ = writeln!(s, "deterioration = {}", run.deterioration);
    let _ = writeln!(s, "sampling = {}", run.sampling);
    if let Some(rep) = &report.replication {
        let v = &rep.validation;
        let _ = writeln!(
            s,
            "assumption1 = {}",
            if v.assumption1.passed { "pass" } else { "fail" }
        );
        let _ = writeln!(s, "assumption1_detail = {}", v.assumption1.detail);
        let _ = writeln!(
            s,
            "assumption2 = {}",
            if v.assumption2.passed { "pass" } else { "fail" }
        );
        let _ = writeln!(s, "assumption2_detail = {}", v.assumption2.detail);
        let _ = writeln!(s, "structural_issues = {}", v.structural.len());
        let st = &rep.state;
        let _ = writeln!(s, "converged = {}", st.converged);
        let _ = writeln!(s, "iterations = {}", st.iteration_count());
        for (id, g) in st.agent_ids.iter().zip(&st.gamma) {
            let _ = writeln!(s, "gamma.{id} = {g}");
        }
        for (i, v) in rep.budget.sums.iter().enumerate() {
            let _ = writeln!(s, "ledger_sum.{} = {v}", i + 1);
        }
        let _ = writeln!(s, "weak_budget_balance = {}", rep.budget.weakly_balanced);
        let _ = writeln!(s, "balanced_at_convergence = {}", rep.budget.balanced_at_convergence);
        let penalized: Vec<String> = st.penalized().iter().map(|&n| st.agent_ids[n].to_string()).collect();
        let _ = writeln!(s, "penalized_agents = {}", penalized.join(","));
        let _ = writeln!(s, "negative_objectives = {}", rep.rationality.negative.len());
        let _ = writeln!(s, "total_expected_reward = {}", rep.total_reward);
        let _ = writeln!(
            s,
            "clamped_scenario_mass = {}",
            rep.prepared.scenarios.total_clamped_mass()
        );
    }
    if let Some(sw) = &report.sweep {
        for c in &sw.cells {
            let _ = writeln!(
                s,
                "sweep.{}-{}.{} = {}",
                c.sigma_lo, c.sigma_hi, c.scenarios, c.total_reward
            );
        }
    }
    s
}

pub fn events_jsonl(rep: &Replication) -> Result<String> {
    let mut out = String::new();
    for e in event_log(&rep.state) {
        let line = serde_json::to_string(&e).map_err(|e| Error::InvalidInput(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Writes every file the report has material for and returns their paths.
pub fn emit_report(dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(&str, String)> = Vec::new();
    if let Some(rep) = &report.replication {
        files.push(("schedules.tsv", schedules_table(rep)?));
        files.push(("incentives.tsv", incentives_table(rep)?));
        files.push(("rewards.tsv", rewards_table(rep)?));
        files.push(("capacity.tsv", capacity_table(rep)?));
        files.push(("events.jsonl", events_jsonl(rep)?));
    }
    if let Some(base) = &report.baselines {
        files.push(("baselines.tsv", baselines_table(report.replication.as_ref(), base)?));
    }
    if let Some(sw) = &report.sweep {
        files.push(("sweep.tsv", sweep_table(sw)?));
    }
    files.push(("summary.txt", summary_text(report)));
    let mut paths = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        write_file(&path, &body)?;
        paths.push(path);
    }
    Ok(paths)
}
