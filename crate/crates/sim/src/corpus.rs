//! Labeled synthetic corpora for identification and classification experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spai_core::introspect::{AnomalyClass, LabeledWindow};
use spai_core::signals::{extract_features, Trial};
use spai_core::taskgraph::KITTING_SKILLS;

use crate::error::{Result, SimError};
use crate::inject::{inject, AnomalyInjector, InjectionContext};
use crate::profile::SkillCatalog;
use crate::seeds::derive;

/// Training windows per class in canonical class order (HC, TC, OS, NO, WC).
pub const WINDOW_TRAIN_COUNTS: [usize; 5] = [18, 17, 18, 15, 17];
pub const WINDOW_TEST_PER_CLASS: usize = 20;

/// Skills on which each class is physically meaningful in the kitting task.
pub fn allowed_skills(class: AnomalyClass) -> &'static [&'static str] {
    match class {
        AnomalyClass::HumanCollision => &["move_to_pick", "pick_approach", "pick_lift", "move_to_place", "place"],
        AnomalyClass::ToolCollision => &["move_to_pick", "pick_approach", "pick_lift", "move_to_place"],
        AnomalyClass::ObjectSlip => &["pick_lift", "move_to_place", "place"],
        AnomalyClass::NoObject => &["pick_lift"],
        AnomalyClass::WallCollision => &["move_to_place"],
    }
}

pub fn node_of(skill: &str) -> Result<&'static str> {
    KITTING_SKILLS.iter().find(|(_, s)| *s == skill).map(|(n, _)| *n).ok_or_else(|| SimError::invalid(format!("unknown skill {skill}")))
}

/// Randomized injector of `class` for a stream of `duration` seconds.
pub fn random_injector<R: Rng>(class: AnomalyClass, node: &str, duration: f64, rng: &mut R) -> AnomalyInjector {
    let onset = |rng: &mut R, lo: f64, hi: f64| (rng.random_range(lo..hi) * duration * 50.0).round() / 50.0;
    match class {
        AnomalyClass::HumanCollision => {
            let t = onset(rng, 0.25, 0.65);
            AnomalyInjector::new(class, node, t, rng.random_range(0.2..0.8), rng.random_range(8.0..25.0))
        }
        AnomalyClass::ToolCollision => {
            let t = onset(rng, 0.2, 0.6);
            AnomalyInjector::new(class, node, t, rng.random_range(1.2..3.0), rng.random_range(5.0..12.0))
                .with_rise(rng.random_range(0.3..0.8))
        }
        AnomalyClass::WallCollision => {
            let t = onset(rng, 0.2, 0.6);
            AnomalyInjector::new(class, node, t, rng.random_range(1.2..3.0), rng.random_range(5.0..12.0))
                .with_rise(rng.random_range(0.6..1.2))
        }
        AnomalyClass::ObjectSlip => {
            // place releases the object at 76% of the stream
            let hi = if node == "4" { 0.55 } else { 0.65 };
            AnomalyInjector::new(class, node, onset(rng, 0.15, hi), 0.0, 1.0).with_rise(rng.random_range(0.2..0.5))
        }
        AnomalyClass::NoObject => AnomalyInjector::new(class, node, 0.0, 0.0, 1.0),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentificationTrial {
    pub skill: String,
    pub node: String,
    pub class: Option<AnomalyClass>,
    /// Ground-truth anomaly onsets (s).
    pub events: Vec<f64>,
    #[serde(skip)]
    pub trial: Option<Trial>,
}

/// Injected copy of a fresh nominal stream of `skill`.
pub fn injected_trial(catalog: &SkillCatalog, skill: &str, class: AnomalyClass, seed: u64) -> Result<(Trial, AnomalyInjector)> {
    let node = node_of(skill)?;
    let duration = catalog.default_duration(skill)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, "injector", 0));
    let inj = random_injector(class, node, duration, &mut rng);
    let nominal = catalog.generate_nominal(skill, derive(seed, "stream", 0), duration)?;
    let ctx = InjectionContext { profile: catalog.profile(skill)?, mass: catalog.mass, seed: derive(seed, "inject", 0) };
    Ok((inject(&nominal, &inj, &ctx)?, inj))
}

/// `nominal_per_skill` clean trials of every skill followed by `injected_per_class` trials of
/// every class, spread round-robin over the class's allowed skills.
pub fn identification_corpus(
    catalog: &SkillCatalog,
    nominal_per_skill: usize,
    injected_per_class: usize,
    seed: u64,
) -> Result<Vec<IdentificationTrial>> {
    let mut out = Vec::new();
    for (node, skill) in KITTING_SKILLS {
        let d = catalog.default_duration(skill)?;
        for i in 0..nominal_per_skill {
            let trial = catalog.generate_nominal(skill, derive(seed, &format!("nominal/{skill}"), i as u64), d)?;
            out.push(IdentificationTrial { skill: skill.into(), node: node.into(), class: None, events: vec![], trial: Some(trial) });
        }
    }
    for class in AnomalyClass::ALL {
        let skills = allowed_skills(class);
        for i in 0..injected_per_class {
            let skill = skills[i % skills.len()];
            let (trial, inj) = injected_trial(catalog, skill, class, derive(seed, &format!("injected/{class}"), i as u64))?;
            out.push(IdentificationTrial {
                skill: skill.into(),
                node: inj.node.clone(),
                class: Some(class),
                events: vec![inj.onset],
                trial: Some(trial),
            });
        }
    }
    Ok(out)
}

/// Raw-feature windows centered shortly after each anomaly onset.
pub fn window_corpus(catalog: &SkillCatalog, counts: &[(AnomalyClass, usize)], std_window: f64, seed: u64) -> Result<Vec<LabeledWindow>> {
    let mut out = Vec::new();
    for &(class, n) in counts {
        let skills = allowed_skills(class);
        for i in 0..n {
            let s = derive(seed, &format!("window/{class}"), i as u64);
            let skill = skills[i % skills.len()];
            let (trial, inj) = injected_trial(catalog, skill, class, s)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive(s, "center", 0));
            let center = inj.onset + rng.random_range(0.02..0.2);
            out.push(LabeledWindow { class, center, source: extract_features(&trial, std_window)? });
        }
    }
    Ok(out)
}

pub fn train_counts() -> Vec<(AnomalyClass, usize)> {
    AnomalyClass::ALL.into_iter().zip(WINDOW_TRAIN_COUNTS).collect()
}

pub fn test_counts() -> Vec<(AnomalyClass, usize)> {
    AnomalyClass::ALL.into_iter().map(|c| (c, WINDOW_TEST_PER_CLASS)).collect()
}
