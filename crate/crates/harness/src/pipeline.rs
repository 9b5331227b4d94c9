//! Training and evaluation pipelines shared by the command line and the acceptance suite.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spai_core::introspect::{detect_all, AnomalyClass, ReactivityGrid, DEFAULT_WINDOW};
use spai_core::signals::extract_features;
use spai_core::taskgraph::{kitting_graph, TaskGraph};
use spai_sim::corpus::{identification_corpus, window_corpus, WINDOW_TEST_PER_CLASS, WINDOW_TRAIN_COUNTS};
use spai_sim::library::{calibration_seeds, nominal_features, sweep_window_extents, train_window_classifier};
use spai_sim::seeds::derive;
use spai_sim::{train_library, ModelLibrary, SkillCatalog, TrainingConfig, WorldConfig};

use crate::error::{HarnessError, Result};
use crate::metrics::{
    evaluate_classification, evaluate_identification, ClassificationReport, IdentificationMetrics, TrialDetections, DEFAULT_MATCH_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentificationSetup {
    pub nominal_per_skill: usize,
    pub injected_per_class: usize,
    pub tolerance: f64,
}

impl Default for IdentificationSetup {
    fn default() -> Self {
        IdentificationSetup { nominal_per_skill: 40, injected_per_class: 40, tolerance: DEFAULT_MATCH_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassificationSetup {
    /// Training windows per class in canonical class order.
    pub train_counts: Vec<usize>,
    pub test_per_class: usize,
    pub pre: f64,
    pub post: f64,
}

impl Default for ClassificationSetup {
    fn default() -> Self {
        ClassificationSetup {
            train_counts: WINDOW_TRAIN_COUNTS.to_vec(),
            test_per_class: WINDOW_TEST_PER_CLASS,
            pre: DEFAULT_WINDOW,
            post: DEFAULT_WINDOW,
        }
    }
}

/// Everything a run needs besides the seed; every field has a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub training: TrainingConfig,
    pub identification: IdentificationSetup,
    pub classification: ClassificationSetup,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: ExperimentConfig = match path {
            None => ExperimentConfig::default(),
            Some(p) => toml::from_str(&std::fs::read_to_string(p)?)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.training.validate()?;
        if self.classification.train_counts.len() != AnomalyClass::ALL.len() {
            return Err(HarnessError::invalid("classification.train_counts needs one entry per class"));
        }
        if self.identification.tolerance.is_nan() || self.identification.tolerance < 0.0 {
            return Err(HarnessError::invalid("matching tolerance must be non-negative"));
        }
        Ok(())
    }

    pub fn class_counts(&self) -> Vec<(AnomalyClass, usize)> {
        AnomalyClass::ALL.into_iter().zip(self.classification.train_counts.iter().copied()).collect()
    }

    pub fn test_counts(&self) -> Vec<(AnomalyClass, usize)> {
        AnomalyClass::ALL.into_iter().map(|c| (c, self.classification.test_per_class)).collect()
    }
}

pub fn catalog(cfg: &ExperimentConfig) -> Result<SkillCatalog> {
    Ok(SkillCatalog::kitting(&cfg.world)?)
}

pub fn task_graph(cfg: &ExperimentConfig) -> Result<TaskGraph> {
    Ok(kitting_graph(&cfg.world.kitting_goals(0)?)?)
}

/// Nominal models and calibrated thresholds for every kitting skill.
pub fn build_library(cfg: &ExperimentConfig, seed: u64) -> Result<ModelLibrary> {
    Ok(train_library(&catalog(cfg)?, &cfg.training, seed)?)
}

/// Trains the window classifier on a fresh labeled corpus and attaches it to `library`.
pub fn attach_classifier(library: &mut ModelLibrary, cfg: &ExperimentConfig, seed: u64) -> Result<()> {
    let train = window_corpus(&library.catalog, &cfg.class_counts(), cfg.training.std_window, derive(seed, "windows/train", 0))?;
    let c = &cfg.classification;
    library.classifier = Some(train_window_classifier(&train, &cfg.training, c.pre, c.post, derive(seed, "classifier", 0))?);
    Ok(())
}

pub fn load_library(path: &Path) -> Result<ModelLibrary> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}

pub fn save_library(library: &ModelLibrary, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(f, library)?;
    Ok(())
}

/// Flags raised on each skill's own calibration streams.
pub fn calibration_flags(library: &ModelLibrary) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    for (skill, models) in &library.skills {
        let seeds = calibration_seeds(skill, library.config.n_calib, library.seed);
        let mut n = 0;
        for raw in nominal_features(&library.catalog, skill, &seeds, library.config.std_window)? {
            n += detect_all(&models.identification, &models.scaling.apply(&raw)?)?.len();
        }
        out.insert(skill.clone(), n);
    }
    Ok(out)
}

/// Detections on a labeled corpus of nominal and injected executions.
///
/// A node execution stops at its first flag, so only the first flag of each trial counts.
pub fn identification_detections(library: &ModelLibrary, setup: &IdentificationSetup, seed: u64) -> Result<Vec<TrialDetections>> {
    let corpus = identification_corpus(&library.catalog, setup.nominal_per_skill, setup.injected_per_class, seed)?;
    corpus
        .iter()
        .map(|t| {
            let models = library.skill(&t.skill)?;
            let trial = t.trial.as_ref().ok_or_else(|| HarnessError::invalid("corpus trial without samples"))?;
            let seq = models.scaling.apply(&extract_features(trial, library.config.std_window)?)?;
            let flags = detect_all(&models.identification, &seq)?;
            Ok(TrialDetections { node: t.node.clone(), events: t.events.clone(), flags: flags.first().map(|f| f.t).into_iter().collect() })
        })
        .collect()
}

pub fn identification_experiment(
    library: &ModelLibrary,
    setup: &IdentificationSetup,
    seed: u64,
) -> Result<(IdentificationMetrics, BTreeMap<String, usize>)> {
    let dets = identification_detections(library, setup, seed)?;
    let mut counts = BTreeMap::new();
    for d in &dets {
        *counts.entry(d.node.clone()).or_default() += 1;
    }
    Ok((evaluate_identification(&dets, setup.tolerance), counts))
}

/// Scores the attached classifier on a fresh test corpus.
pub fn classification_experiment(library: &ModelLibrary, cfg: &ExperimentConfig, seed: u64) -> Result<ClassificationReport> {
    let clf = library.classifier()?;
    let test = window_corpus(&library.catalog, &cfg.test_counts(), cfg.training.std_window, derive(seed, "windows/test", 0))?;
    let mut truth = Vec::with_capacity(test.len());
    let mut predicted = Vec::with_capacity(test.len());
    for w in &test {
        truth.push(w.class);
        predicted.push(clf.classify_at(&w.source, w.center)?.class);
    }
    evaluate_classification(&truth, &predicted, &AnomalyClass::ALL)
}

/// Classifier accuracy for every `(pre, post)` window extent on one train/test corpus pair.
pub fn reactivity_experiment(cfg: &ExperimentConfig, pre: &[f64], post: &[f64], seed: u64) -> Result<ReactivityGrid> {
    let cat = catalog(cfg)?;
    let train = window_corpus(&cat, &cfg.class_counts(), cfg.training.std_window, derive(seed, "windows/train", 0))?;
    let test = window_corpus(&cat, &cfg.test_counts(), cfg.training.std_window, derive(seed, "windows/test", 0))?;
    Ok(sweep_window_extents(&train, &test, &cfg.training, pre, post, derive(seed, "classifier", 0))?)
}
