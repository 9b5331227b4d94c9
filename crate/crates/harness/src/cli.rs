//! Command-line surface.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spai_core::dmp::{Demonstration, DmpSkill, DEFAULT_K, DEFAULT_N_BASIS};
use spai_core::introspect::calibrate;
use spai_core::signals::{read_trial_file, TrialFile};
use spai_sim::library::nominal_features;
use spai_sim::scenario::{self, Scenario};
use spai_sim::seeds::derive;
use spai_sim::{run_episodes, ModelLibrary};

use crate::error::{HarnessError, Result};
use crate::metrics::{evaluate_success, success_by_modality, success_table_csv, EpisodeRecord, MetricsReport, TrialCounts};
use crate::pipeline::{
    attach_classifier, build_library, calibration_flags, catalog, classification_experiment, identification_experiment, load_library,
    reactivity_experiment, save_library, task_graph, ExperimentConfig,
};
use crate::report::render_markdown;
use crate::run_dir::{collect_summaries, create_run_dir, write_run, RunSummary};

pub const LIBRARY_FILE: &str = "library.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "spai", version, about = "Train, simulate and evaluate introspective kitting skills")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Experiment configuration (TOML); defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LibraryArg {
    /// Trained library from `train-hmm` or `train-classifier`; trained on the fly when absent.
    #[arg(long)]
    pub library: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Nominal,
    Reenactment,
    PersistentTc,
    AdaptationOverAdaptation,
    SelfHealing,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn motion primitives from a recorded trial or for every kitting skill.
    TrainDmp {
        #[command(flatten)]
        common: Common,
        /// Raw trial CSV whose positions form the demonstration.
        #[arg(long)]
        trial: Option<PathBuf>,
        #[arg(long, default_value = "demo")]
        skill: String,
    },
    /// Train nominal models and thresholds for every kitting skill.
    TrainHmm {
        #[command(flatten)]
        common: Common,
    },
    /// Recompute thresholds of a trained library on fresh nominal executions.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        library: LibraryArg,
    },
    /// Train the anomaly classifier and score it on a held-out corpus.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        library: LibraryArg,
    },
    /// Run scripted episodes and record them in a run directory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        library: LibraryArg,
        /// Scenario file (TOML).
        #[arg(long, conflicts_with = "suite")]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum)]
        suite: Option<Suite>,
    },
    /// Identification and classification metrics on labeled synthetic corpora.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        library: LibraryArg,
    },
    /// Classifier accuracy over a grid of window extents.
    SweepReactivity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2")]
        pre: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2")]
        post: Vec<f64>,
    },
    /// Collect run summaries and metrics into one report.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directories searched recursively for run summaries and metrics.
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
    },
}

#[derive(Debug, Serialize)]
struct CommandSummary<T: Serialize> {
    command: &'static str,
    seed: u64,
    artifacts: Vec<String>,
    results: T,
}

fn write_summary<T: Serialize>(out: &Path, command: &'static str, seed: u64, artifacts: &[&str], results: T) -> Result<()> {
    let s = CommandSummary { command, seed, artifacts: artifacts.iter().map(|a| a.to_string()).collect(), results };
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&s)? + "\n")?;
    Ok(())
}

fn library_for(arg: &LibraryArg, cfg: &ExperimentConfig, seed: u64) -> Result<ModelLibrary> {
    match &arg.library {
        Some(p) => load_library(p),
        None => build_library(cfg, seed),
    }
}

/// Scenarios of a named suite.
pub fn suite(which: Suite, seed: u64) -> Result<Vec<Scenario>> {
    let mut out = Vec::new();
    if matches!(which, Suite::Nominal | Suite::All) {
        out.push(scenario::nominal(derive(seed, "nominal", 0)));
    }
    if matches!(which, Suite::Reenactment | Suite::All) {
        out.extend(scenario::reenactment_suite(60, derive(seed, "reenactment", 0))?);
    }
    if matches!(which, Suite::PersistentTc | Suite::All) {
        out.push(scenario::persistent_tool_collision(derive(seed, "persistent", 0))?);
    }
    if matches!(which, Suite::AdaptationOverAdaptation | Suite::All) {
        out.push(scenario::adaptation_over_adaptation(derive(seed, "adaptation", 0))?);
    }
    if matches!(which, Suite::SelfHealing | Suite::All) {
        out.push(scenario::self_healing(derive(seed, "self_healing", 0)));
    }
    Ok(out)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainDmp { common, trial, skill } => train_dmp(&common, trial.as_deref(), &skill),
        Command::TrainHmm { common } => train_hmm(&common),
        Command::Calibrate { common, library } => recalibrate(&common, &library),
        Command::TrainClassifier { common, library } => train_classifier(&common, &library),
        Command::Simulate { common, library, scenario, suite } => simulate(&common, &library, scenario.as_deref(), suite),
        Command::Evaluate { common, library } => evaluate(&common, &library),
        Command::SweepReactivity { common, pre, post } => sweep(&common, &pre, &post),
        Command::Report { common, runs } => report(&common, &runs),
    }
}

fn setup(common: &Common) -> Result<ExperimentConfig> {
    fs::create_dir_all(&common.out)?;
    ExperimentConfig::load(common.config.as_deref())
}

fn train_dmp(common: &Common, trial: Option<&Path>, skill: &str) -> Result<()> {
    let cfg = setup(common)?;
    let mut skills: BTreeMap<String, DmpSkill> = BTreeMap::new();
    match trial {
        Some(path) => {
            let TrialFile::Raw(t) = read_trial_file(path)? else {
                return Err(HarnessError::invalid("a demonstration needs a raw trial with poses"));
            };
            let duration = t.duration();
            let demos = (0..3)
                .map(|k| Demonstration::from_positions(t.samples.iter().map(|s| s.pose[k]).collect(), duration))
                .collect::<spai_core::Result<Vec<_>>>()?;
            skills.insert(skill.to_string(), DmpSkill::learn(skill, &demos, DEFAULT_N_BASIS, DEFAULT_K)?);
        }
        None => {
            for (name, m) in catalog(&cfg)?.motions {
                skills.insert(name, m.dmp);
            }
        }
    }
    let mut artifacts = Vec::new();
    for (name, dmp) in &skills {
        let file = format!("dmp_{name}.json");
        fs::write(common.out.join(&file), serde_json::to_string_pretty(dmp)? + "\n")?;
        artifacts.push(file);
    }
    let refs: Vec<&str> = artifacts.iter().map(String::as_str).collect();
    write_summary(&common.out, "train-dmp", common.seed, &refs, skills.keys().collect::<Vec<_>>())
}

fn threshold_csv(library: &ModelLibrary) -> String {
    let mut s = String::from("skill,states,grad_min,grad_max,threshold\n");
    for (skill, m) in &library.skills {
        let id = &m.identification;
        s.push_str(&format!("{skill},{},{},{},{}\n", id.model.k(), id.grad_min, id.grad_max, id.threshold()));
    }
    s
}

fn train_hmm(common: &Common) -> Result<()> {
    let cfg = setup(common)?;
    let library = build_library(&cfg, common.seed)?;
    save_library(&library, &common.out.join(LIBRARY_FILE))?;
    fs::write(common.out.join("thresholds.csv"), threshold_csv(&library))?;
    let flags = calibration_flags(&library)?;
    write_summary(
        &common.out,
        "train-hmm",
        common.seed,
        &[LIBRARY_FILE, "thresholds.csv"],
        serde_json::json!({ "calibration_flags": flags }),
    )
}

fn recalibrate(common: &Common, arg: &LibraryArg) -> Result<()> {
    let cfg = setup(common)?;
    let mut library = library_for(arg, &cfg, common.seed)?;
    let n = library.config.n_calib;
    for (skill, models) in library.skills.iter_mut() {
        let seeds: Vec<u64> = (0..n as u64).map(|i| derive(common.seed, &format!("recalibrate/{skill}"), i)).collect();
        let seqs = nominal_features(&library.catalog, skill, &seeds, library.config.std_window)?
            .iter()
            .map(|s| models.scaling.apply(s).map(|s| s.frames))
            .collect::<spai_core::Result<Vec<_>>>()?;
        models.identification = calibrate(&models.identification.node_id, models.identification.model.clone(), &seqs)?;
    }
    save_library(&library, &common.out.join(LIBRARY_FILE))?;
    fs::write(common.out.join("thresholds.csv"), threshold_csv(&library))?;
    write_summary(&common.out, "calibrate", common.seed, &[LIBRARY_FILE, "thresholds.csv"], library.skills.len())
}

fn train_classifier(common: &Common, arg: &LibraryArg) -> Result<()> {
    let cfg = setup(common)?;
    let mut library = library_for(arg, &cfg, common.seed)?;
    attach_classifier(&mut library, &cfg, common.seed)?;
    let report = classification_experiment(&library, &cfg, common.seed)?;
    save_library(&library, &common.out.join(LIBRARY_FILE))?;
    fs::write(common.out.join("confusion.csv"), report.matrix.to_csv())?;
    write_summary(&common.out, "train-classifier", common.seed, &[LIBRARY_FILE, "confusion.csv"], &report)
}

fn simulate(common: &Common, arg: &LibraryArg, scenario: Option<&Path>, which: Option<Suite>) -> Result<()> {
    let cfg = setup(common)?;
    let scenarios = match (scenario, which) {
        (Some(p), _) => vec![Scenario::load(p)?],
        (None, Some(s)) => suite(s, common.seed)?,
        (None, None) => return Err(HarnessError::invalid("pass --scenario or --suite")),
    };
    let mut library = library_for(arg, &cfg, common.seed)?;
    if library.classifier.is_none() && scenarios.iter().any(|s| s.modality == spai_sim::LabelModality::Imperfect) {
        attach_classifier(&mut library, &cfg, common.seed)?;
    }
    let graph = task_graph(&cfg)?;
    let traces = run_episodes(&graph, &library, &scenarios);
    let dir = create_run_dir(&common.out)?;
    let mut summaries: Vec<RunSummary> = Vec::new();
    for (sc, trace) in scenarios.iter().zip(traces) {
        let trace = trace?;
        let target = if scenarios.len() == 1 { dir.clone() } else { dir.join(&sc.name) };
        summaries.push(write_run(&target, sc, &trace, library.catalog.rate_hz)?);
    }
    let records: Vec<EpisodeRecord> = summaries.iter().map(|s| s.record.clone()).collect();
    let rows = evaluate_success(&records, None);
    fs::write(dir.join("success.csv"), success_table_csv(&rows))?;
    if scenarios.len() > 1 {
        let outcomes: BTreeMap<&str, &spai_sim::EpisodeOutcome> = summaries.iter().map(|s| (s.scenario.as_str(), &s.outcome)).collect();
        write_summary(&dir, "simulate", common.seed, &["success.csv"], outcomes)?;
    }
    println!("{}", dir.display());
    for s in &summaries {
        println!("{}: {:?}", s.scenario, s.outcome);
    }
    Ok(())
}

fn evaluate(common: &Common, arg: &LibraryArg) -> Result<()> {
    let cfg = setup(common)?;
    let mut library = library_for(arg, &cfg, common.seed)?;
    if library.classifier.is_none() {
        attach_classifier(&mut library, &cfg, common.seed)?;
    }
    let (id, id_counts) = identification_experiment(&library, &cfg.identification, derive(common.seed, "identification", 0))?;
    let cls = classification_experiment(&library, &cfg, common.seed)?;
    let mut windows = BTreeMap::new();
    for (i, c) in cls.matrix.labels.iter().enumerate() {
        windows.insert(c.code().to_string(), cls.matrix.row_total(i));
    }
    let report = MetricsReport {
        identification: Some(id),
        classification: Some(cls),
        counts: TrialCounts { identification_trials: id_counts, classification_windows: windows, episodes: 0 },
        ..Default::default()
    };
    report.validate()?;
    if let Some(c) = &report.classification {
        fs::write(common.out.join("confusion.csv"), c.matrix.to_csv())?;
    }
    fs::write(common.out.join("metrics.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(common.out.join("report.md"), render_markdown(&report))?;
    write_summary(&common.out, "evaluate", common.seed, &["metrics.json", "confusion.csv", "report.md"], &report.reference)
}

fn sweep(common: &Common, pre: &[f64], post: &[f64]) -> Result<()> {
    let cfg = setup(common)?;
    if pre.iter().chain(post).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(HarnessError::invalid("window extents must be finite and non-negative"));
    }
    let grid = reactivity_experiment(&cfg, pre, post, common.seed)?;
    fs::write(common.out.join("reactivity.csv"), grid.to_csv())?;
    write_summary(&common.out, "sweep-reactivity", common.seed, &["reactivity.csv"], &grid)
}

fn report(common: &Common, runs: &[PathBuf]) -> Result<()> {
    fs::create_dir_all(&common.out)?;
    let mut records = Vec::new();
    let mut metrics: Option<MetricsReport> = None;
    for root in runs {
        for (_, s) in collect_summaries(root)? {
            records.push(s.record);
        }
        let m = root.join("metrics.json");
        if m.is_file() {
            metrics = Some(serde_json::from_str(&fs::read_to_string(m)?)?);
        }
    }
    let mut report = metrics.unwrap_or_default();
    report.success = evaluate_success(&records, None);
    report.success_by_modality = success_by_modality(&report.success);
    report.counts.episodes = records.len();
    report.validate()?;
    fs::write(common.out.join("report.md"), render_markdown(&report))?;
    fs::write(common.out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    fs::write(common.out.join("success.csv"), success_table_csv(&report.success))?;
    write_summary(&common.out, "report", common.seed, &["report.md", "report.json", "success.csv"], records.len())
}
