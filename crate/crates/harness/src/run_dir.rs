//! Run directories: `experiment_at_[time]/` with the recorded stream, the label log, the
//! per-tick trace and a summary document.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Local};
use serde::{Deserialize, Serialize};
use spai_core::introspect::AnomalyClass;
use spai_core::signals::{write_trial_csv, Trial, FEATURE_NAMES};
use spai_core::taskgraph::RecoveryAction;
use spai_sim::episode::TraceCounters;
use spai_sim::{EpisodeOutcome, ExecutionTrace, LabelEvent, LabelModality, Scenario};

use crate::error::Result;
use crate::metrics::EpisodeRecord;

pub const TRIAL_FILE: &str = "trial.csv";
pub const LABELS_FILE: &str = "anomaly_labels.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn run_dir_name(now: &DateTime<Local>) -> String {
    format!("experiment_at_{}", now.format("%Y-%m-%d_%H-%M-%S"))
}

/// Creates a fresh `experiment_at_[time]` directory under `out`, suffixed when the name is taken.
pub fn create_run_dir(out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let base = run_dir_name(&Local::now());
    let mut dir = out.join(&base);
    let mut k = 1;
    while dir.exists() {
        k += 1;
        dir = out.join(format!("{base}_{k}"));
    }
    fs::create_dir(&dir)?;
    Ok(dir)
}

fn class_code(c: Option<AnomalyClass>) -> &'static str {
    c.map_or("-", |c| c.code())
}

fn action_text(a: &Option<RecoveryAction>) -> String {
    match a {
        None => "-".into(),
        Some(RecoveryAction::ReEnact(n)) => format!("reenact:{n}"),
        Some(RecoveryAction::ExecuteAdaptive(n)) => format!("adaptive:{n}"),
        Some(RecoveryAction::RequestAdaptation) => "request_adaptation".into(),
    }
}

/// `t node label truth action [inserted]`, one flag per line.
pub fn label_line(ev: &LabelEvent) -> String {
    let mut s = format!("{:.2} {} {} {} {}", ev.t, ev.node, class_code(ev.label), class_code(ev.truth), action_text(&ev.action));
    if let Some(id) = &ev.inserted {
        s.push_str(&format!(" inserted:{id}"));
    }
    s
}

/// Machine-readable summary of one episode run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub modality: LabelModality,
    pub outcome: EpisodeOutcome,
    pub counters: TraceCounters,
    pub visited: Vec<String>,
    /// Adaptive branches present at the end of the episode.
    pub registry: Vec<(String, String)>,
    pub record: EpisodeRecord,
}

impl RunSummary {
    pub fn new(scenario: &Scenario, trace: &ExecutionTrace) -> Self {
        RunSummary {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            modality: scenario.modality,
            outcome: trace.outcome().clone(),
            counters: trace.counters.clone(),
            visited: trace.visited.clone(),
            registry: trace.graph.registry.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            record: EpisodeRecord::from_trace(scenario, trace),
        }
    }
}

fn write_trace_csv<W: Write>(trace: &ExecutionTrace, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    write!(w, "t,node,gradient,flag,label,truth,action")?;
    for n in FEATURE_NAMES {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for s in &trace.steps {
        write!(
            w,
            "{:.2},{},{},{},{},{},{}",
            s.t,
            s.node,
            s.gradient,
            u8::from(s.flag),
            class_code(s.label),
            class_code(s.truth),
            action_text(&s.action)
        )?;
        for v in s.features {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the four run files into `dir`.
pub fn write_run(dir: &Path, scenario: &Scenario, trace: &ExecutionTrace, rate_hz: f64) -> Result<RunSummary> {
    fs::create_dir_all(dir)?;
    let trial = Trial::new(scenario.name.clone(), trace.samples.clone(), rate_hz)?;
    write_trial_csv(&trial, fs::File::create(dir.join(TRIAL_FILE))?)?;
    let mut labels = String::new();
    for ev in &trace.events {
        labels.push_str(&label_line(ev));
        labels.push('\n');
    }
    fs::write(dir.join(LABELS_FILE), labels)?;
    write_trace_csv(trace, fs::File::create(dir.join(TRACE_FILE))?)?;
    let summary = RunSummary::new(scenario, trace);
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Every episode summary below `root`, in path order.
pub fn collect_summaries(root: &Path) -> Result<Vec<(PathBuf, RunSummary)>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == SUMMARY_FILE) {
                if let Ok(s) = read_summary(&p) {
                    out.push((p, s));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
