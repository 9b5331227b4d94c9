use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use spai_core::hmm::{empirical_bayes_init, fit, select_model_kfold, AllocationKind, FitConfig, HmmModel, ObservationKind};
use spai_core::introspect::{
    calibrate, reactivity_sweep, train_classifier, AnomalyClass, ClassifierModel, IdentificationModel, LabeledWindow, ReactivityGrid,
    DEFAULT_WINDOW,
};
use spai_core::signals::{extract_features, fit_scaling, FeatureSequence, ScalingProfile, DEFAULT_STD_WINDOW};
use spai_core::taskgraph::KITTING_SKILLS;

use crate::error::{Result, SimError};
use crate::profile::SkillCatalog;
use crate::seeds::derive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub n_train: usize,
    pub n_calib: usize,
    pub k_folds: usize,
    pub k_trunc: usize,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub tol: f64,
    pub s_f: f64,
    pub allocation: AllocationKind,
    pub observation: ObservationKind,
    pub std_window: f64,
    pub classifier_pre: f64,
    pub classifier_post: f64,
    pub classifier_restarts: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            n_train: 12,
            n_calib: 7,
            k_folds: 3,
            k_trunc: 10,
            max_iter: 300,
            n_restarts: 2,
            tol: 1e-6,
            s_f: 1.0,
            allocation: AllocationKind::StickyHdp,
            observation: ObservationKind::AffineVar1,
            std_window: DEFAULT_STD_WINDOW,
            classifier_pre: DEFAULT_WINDOW,
            classifier_post: DEFAULT_WINDOW,
            classifier_restarts: 1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train < 2 || self.n_calib == 0 || self.k_trunc == 0 || self.max_iter == 0 || self.n_restarts == 0 {
            return Err(SimError::invalid("training sizes must be positive (n_train >= 2)"));
        }
        Ok(())
    }

    fn fit_config(&self, seqs: &[Vec<DVector<f64>>], restarts: usize) -> spai_core::Result<FitConfig> {
        let mut cfg = FitConfig::empirical(seqs, self.allocation, self.observation)?;
        let (nu, delta) = empirical_bayes_init(seqs, self.s_f)?;
        cfg.hyper.s_f = self.s_f;
        cfg.hyper.nu = nu;
        cfg.hyper.delta = delta;
        cfg.hyper.k_trunc = self.k_trunc;
        cfg.hyper.max_iter = self.max_iter;
        cfg.hyper.n_restarts = restarts;
        cfg.hyper.tol = self.tol;
        Ok(cfg)
    }

    /// Sticky HDP fit with k-fold selection when there are enough sequences.
    pub fn fit_sequences(&self, seqs: &[Vec<DVector<f64>>], restarts: usize, seed: u64) -> spai_core::Result<HmmModel> {
        let cfg = self.fit_config(seqs, restarts)?;
        let model = if self.k_folds >= 2 && seqs.len() >= self.k_folds {
            select_model_kfold(seqs, self.k_folds, &cfg, seed)?.model
        } else {
            fit(seqs, &cfg, seed)?
        };
        Ok(model)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkillModels {
    pub skill: String,
    pub scaling: ScalingProfile,
    pub identification: IdentificationModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub scaling: ScalingProfile,
    pub model: ClassifierModel,
}

impl TrainedClassifier {
    pub fn classify_at(&self, raw: &FeatureSequence, t: f64) -> Result<spai_core::introspect::AnomalyLabel> {
        Ok(self.model.classify_at(&self.scaling.apply(raw)?, t)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelLibrary {
    /// Seed the skill models were trained with.
    pub seed: u64,
    pub catalog: SkillCatalog,
    pub config: TrainingConfig,
    pub skills: BTreeMap<String, SkillModels>,
    pub classifier: Option<TrainedClassifier>,
}

impl ModelLibrary {
    pub fn skill(&self, skill: &str) -> Result<&SkillModels> {
        self.skills.get(skill).ok_or_else(|| SimError::invalid(format!("no trained models for skill {skill}")))
    }

    pub fn classifier(&self) -> Result<&TrainedClassifier> {
        self.classifier.as_ref().ok_or_else(|| SimError::invalid("library has no anomaly classifier"))
    }
}

/// Nominal feature sequences of `skill` for the given seeds.
pub fn nominal_features(catalog: &SkillCatalog, skill: &str, seeds: &[u64], std_window: f64) -> Result<Vec<FeatureSequence>> {
    let d = catalog.default_duration(skill)?;
    seeds.iter().map(|&s| Ok(extract_features(&catalog.generate_nominal(skill, s, d)?, std_window)?)).collect()
}

fn frames(seqs: &[FeatureSequence]) -> Vec<Vec<DVector<f64>>> {
    seqs.iter().map(|s| s.frames.clone()).collect()
}

/// Seeds of the nominal streams a skill's threshold is calibrated on.
pub fn calibration_seeds(skill: &str, n: usize, seed: u64) -> Vec<u64> {
    (0..n as u64).map(|i| derive(seed, &format!("calib/{skill}"), i)).collect()
}

/// Scaling, nominal model and calibrated threshold for one skill.
pub fn train_skill(catalog: &SkillCatalog, skill: &str, node_id: &str, cfg: &TrainingConfig, seed: u64) -> Result<SkillModels> {
    cfg.validate()?;
    let train_seeds: Vec<u64> = (0..cfg.n_train as u64).map(|i| derive(seed, &format!("train/{skill}"), i)).collect();
    let calib_seeds = calibration_seeds(skill, cfg.n_calib, seed);
    let train = nominal_features(catalog, skill, &train_seeds, cfg.std_window)?;
    let scaling = fit_scaling(&train)?;
    let scaled = train.iter().map(|s| scaling.apply(s)).collect::<spai_core::Result<Vec<_>>>()?;
    let model = cfg.fit_sequences(&frames(&scaled), cfg.n_restarts, derive(seed, &format!("fit/{skill}"), 0))?;
    let calib = nominal_features(catalog, skill, &calib_seeds, cfg.std_window)?;
    let calib = calib.iter().map(|s| scaling.apply(s)).collect::<spai_core::Result<Vec<_>>>()?;
    let identification = calibrate(node_id, model, &frames(&calib))?;
    log::info!(
        "skill {skill}: K = {}, threshold {:.2} (min {:.2}, range {:.2})",
        identification.model.k(),
        identification.threshold(),
        identification.grad_min,
        identification.grad_range
    );
    Ok(SkillModels { skill: skill.to_string(), scaling, identification })
}

/// Trains every kitting skill; skills run on separate threads and are collected in a fixed order.
pub fn train_library(catalog: &SkillCatalog, cfg: &TrainingConfig, seed: u64) -> Result<ModelLibrary> {
    cfg.validate()?;
    let results: Vec<Result<SkillModels>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            KITTING_SKILLS.iter().map(|(node, skill)| scope.spawn(move || train_skill(catalog, skill, node, cfg, seed))).collect();
        handles.into_iter().map(|h| h.join().expect("skill training thread panicked")).collect()
    });
    let mut skills = BTreeMap::new();
    for r in results {
        let m = r?;
        skills.insert(m.skill.clone(), m);
    }
    Ok(ModelLibrary { seed, catalog: catalog.clone(), config: cfg.clone(), skills, classifier: None })
}

/// Scales raw windows with a profile fit on their sources.
pub fn scale_windows(windows: &[LabeledWindow], scaling: &ScalingProfile) -> Result<Vec<LabeledWindow>> {
    windows.iter().map(|w| Ok(LabeledWindow { class: w.class, center: w.center, source: scaling.apply(&w.source)? })).collect()
}

/// Per-class sequence models over raw (unscaled) labeled windows.
pub fn train_window_classifier(
    windows: &[LabeledWindow],
    cfg: &TrainingConfig,
    pre: f64,
    post: f64,
    seed: u64,
) -> Result<TrainedClassifier> {
    let sources: Vec<FeatureSequence> = windows.iter().map(|w| w.source.clone()).collect();
    let scaling = fit_scaling(&sources)?;
    let scaled = scale_windows(windows, &scaling)?;
    let model = train_classifier(&scaled, pre, post, |c: AnomalyClass, seqs: &[Vec<DVector<f64>>]| {
        cfg.fit_sequences(seqs, cfg.classifier_restarts, derive(seed, c.code(), 0))
    })?;
    Ok(TrainedClassifier { scaling, model })
}

/// Classifier accuracy over a grid of window extents; the scaling is fit once on the
/// training sources.
pub fn sweep_window_extents(
    train: &[LabeledWindow],
    test: &[LabeledWindow],
    cfg: &TrainingConfig,
    pre: &[f64],
    post: &[f64],
    seed: u64,
) -> Result<ReactivityGrid> {
    let sources: Vec<FeatureSequence> = train.iter().map(|w| w.source.clone()).collect();
    let scaling = fit_scaling(&sources)?;
    let (train, test) = (scale_windows(train, &scaling)?, scale_windows(test, &scaling)?);
    Ok(reactivity_sweep(&train, &test, pre, post, |c: AnomalyClass, seqs: &[Vec<DVector<f64>>]| {
        cfg.fit_sequences(seqs, cfg.classifier_restarts, derive(seed, c.code(), 0))
    })?)
}
