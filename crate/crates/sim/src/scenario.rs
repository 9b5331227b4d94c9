//! Declarative episode scripts and the scripted suites used by the acceptance runs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spai_core::introspect::AnomalyClass;
use spai_core::taskgraph::{kitting_counts, PolicyCounts, SelectionMode, KITTING_SKILLS};

use crate::corpus::random_injector;
use crate::error::{Result, SimError};
use crate::inject::AnomalyInjector;
use crate::profile::kitting_profile;
use crate::seeds::derive;
use crate::world::WorldConfig;

pub const DEFAULT_BUDGET_FACTOR: f64 = 20.0;

/// Source of the anomaly label handed to the critic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelModality {
    /// The injector's ground-truth class.
    #[default]
    Perfect,
    /// The trained window classifier.
    Imperfect,
}

impl std::fmt::Display for LabelModality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelModality::Perfect => "perfect",
            LabelModality::Imperfect => "imperfect",
        })
    }
}

/// Scripted stand-in for a kinesthetic demonstration of an adaptive skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationDemo {
    /// Node whose anomaly the demonstration resolves.
    pub node: String,
    pub class: AnomalyClass,
    /// Cartesian waypoints; the first should match the node's start and the last is the new goal.
    pub waypoints: Vec<[f64; 3]>,
}

fn default_budget() -> f64 {
    DEFAULT_BUDGET_FACTOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub modality: LabelModality,
    #[serde(default)]
    pub selection: SelectionMode,
    /// Step budget as a multiple of the nominal episode length.
    #[serde(default = "default_budget")]
    pub budget_factor: f64,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub injectors: Vec<AnomalyInjector>,
    #[serde(default)]
    pub demos: Vec<AdaptationDemo>,
    /// Re-enactment counts added to the kitting table before the episode.
    #[serde(default)]
    pub extra_policies: Vec<PolicyCounts>,
}

/// Milestone position of the node an injector is attached to (`2a.1` sorts with `2a`).
fn milestone_rank(node: &str) -> usize {
    let root = node.split('.').next().unwrap_or(node);
    KITTING_SKILLS.iter().position(|(n, _)| *n == root).unwrap_or(KITTING_SKILLS.len())
}

impl Scenario {
    pub fn new(name: &str, seed: u64, modality: LabelModality) -> Self {
        Scenario {
            name: name.to_string(),
            seed,
            modality,
            selection: SelectionMode::Argmax,
            budget_factor: DEFAULT_BUDGET_FACTOR,
            world: WorldConfig::default(),
            injectors: Vec::new(),
            demos: Vec::new(),
            extra_policies: Vec::new(),
        }
    }

    pub fn with_injector(mut self, inj: AnomalyInjector) -> Self {
        self.injectors.push(inj);
        self.sort_injectors();
        self
    }

    pub fn with_demo(mut self, demo: AdaptationDemo) -> Self {
        self.demos.push(demo);
        self
    }

    pub fn with_policy(mut self, counts: PolicyCounts) -> Self {
        self.extra_policies.push(counts);
        self
    }

    /// Scripted order: milestone, then occurrence, then onset.
    pub fn sort_injectors(&mut self) {
        self.injectors.sort_by(|a, b| {
            (milestone_rank(&a.node), a.occurrence, a.onset)
                .partial_cmp(&(milestone_rank(&b.node), b.occurrence, b.onset))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if !(self.budget_factor.is_finite() && self.budget_factor > 0.0) {
            return Err(SimError::invalid("budget factor must be positive"));
        }
        for inj in &self.injectors {
            inj.validate()?;
        }
        let sorted = self.injectors.windows(2).all(|w| {
            (milestone_rank(&w[0].node), w[0].occurrence, w[0].onset) <= (milestone_rank(&w[1].node), w[1].occurrence, w[1].onset)
        });
        if !sorted {
            return Err(SimError::invalid("injectors must be listed in scripted order"));
        }
        for d in &self.demos {
            if d.waypoints.len() < 2 || d.waypoints.iter().flatten().any(|v| !v.is_finite()) {
                return Err(SimError::invalid(format!("demonstration for {}@{} needs finite waypoints", d.class, d.node)));
            }
        }
        Ok(())
    }

    pub fn demo(&self, node: &str, class: AnomalyClass) -> Option<&AdaptationDemo> {
        self.demos.iter().find(|d| d.node == node && d.class == class)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let mut sc: Scenario = toml::from_str(s)?;
        sc.sort_injectors();
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| SimError::invalid(format!("scenario serialization failed: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Ground-truth anomaly keys `CLASS@node` in scripted order.
    pub fn injected_keys(&self) -> Vec<String> {
        self.injectors.iter().map(|i| format!("{}@{}", i.class, i.node)).collect()
    }
}

/// `(node, class)` pairs with human-selected re-enactment targets in the kitting table.
pub fn table_keys() -> Vec<(String, AnomalyClass)> {
    kitting_counts().into_iter().map(|c| (c.node, c.class)).collect()
}

fn skill_of(node: &str) -> &'static str {
    KITTING_SKILLS.iter().find(|(n, _)| *n == node).map(|(_, s)| *s).unwrap_or("move_to_pick")
}

/// Injector for a table key; slips at `2a` happen after the grasp closes.
pub fn keyed_injector<R: Rng>(node: &str, class: AnomalyClass, rng: &mut R) -> Result<AnomalyInjector> {
    let duration = kitting_profile(skill_of(node))?.duration;
    let mut inj = random_injector(class, node, duration, rng);
    if class == AnomalyClass::ObjectSlip && node == "2a" {
        inj.onset = (rng.random_range(0.86..0.9) * duration * 50.0).round() / 50.0;
        inj.rise = rng.random_range(0.1..0.2);
    }
    Ok(inj)
}

pub fn nominal(seed: u64) -> Scenario {
    Scenario::new("nominal", seed, LabelModality::Perfect)
}

/// `count` single-anomaly episodes cycling over the table keys, perfect modality.
pub fn reenactment_suite(count: usize, seed: u64) -> Result<Vec<Scenario>> {
    let keys = table_keys();
    (0..count)
        .map(|i| {
            let (node, class) = &keys[i % keys.len()];
            let s = derive(seed, "reenactment", i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let inj = keyed_injector(node, *class, &mut rng)?;
            Ok(Scenario::new(&format!("reenact_{i:02}_{class}@{node}"), s, LabelModality::Perfect).with_injector(inj))
        })
        .collect()
}

/// A human bumping the arm once during transport.
pub fn human_collision_in_transport(seed: u64) -> Scenario {
    Scenario::new("hc_transport", seed, LabelModality::Perfect).with_injector(AnomalyInjector::new(
        AnomalyClass::HumanCollision,
        "3",
        1.2,
        0.4,
        20.0,
    ))
}

fn pick_waypoints(world: &WorldConfig) -> Result<[[f64; 3]; 5]> {
    world.kitting_waypoints(0)
}

fn blocking_tool(node: &str) -> AnomalyInjector {
    AnomalyInjector::new(AnomalyClass::ToolCollision, node, 0.7, 1.5, 10.0).with_rise(0.4).persistent()
}

/// Demonstration approaching the grasp from the side with the grasp shifted by `offset`.
fn side_grasp_demo(world: &WorldConfig, node: &str, offset: [f64; 3]) -> Result<AdaptationDemo> {
    let wp = pick_waypoints(world)?;
    let (above, grasp) = (wp[0], wp[1]);
    let shifted = [grasp[0] + offset[0], grasp[1] + offset[1], grasp[2] + offset[2]];
    let via = [shifted[0] + offset[0], shifted[1] + offset[1], 0.5 * (above[2] + shifted[2])];
    Ok(AdaptationDemo { node: node.to_string(), class: AnomalyClass::ToolCollision, waypoints: vec![above, via, shifted] })
}

/// A tool left in the approach path blocks every pick approach until a new approach is taught.
pub fn persistent_tool_collision(seed: u64) -> Result<Scenario> {
    let sc = Scenario::new("persistent_tc", seed, LabelModality::Perfect).with_injector(blocking_tool("2a"));
    let demo = side_grasp_demo(&sc.world, "2a", [0.0, 0.04, 0.0])?;
    Ok(sc.with_demo(demo))
}

/// The taught approach is later blocked too and gets its own adaptation.
pub fn adaptation_over_adaptation(seed: u64) -> Result<Scenario> {
    let sc = Scenario::new("adaptation_over_adaptation", seed, LabelModality::Perfect)
        .with_injector(blocking_tool("2a"))
        .with_injector(blocking_tool("2a.1"));
    let first = side_grasp_demo(&sc.world, "2a", [0.0, 0.04, 0.0])?;
    let second = side_grasp_demo(&sc.world, "2a.1", [-0.04, 0.0, 0.0])?;
    Ok(sc.with_demo(first).with_demo(second))
}

/// A human collision coinciding with a slip during transport; the classifier sees the
/// collision, the object is gone on the retry and a later flag recovers it.
pub fn self_healing(seed: u64) -> Scenario {
    let mut counts = std::collections::BTreeMap::new();
    counts.insert("2a".to_string(), 1);
    Scenario::new("self_healing", seed, LabelModality::Imperfect)
        .with_injector(AnomalyInjector::new(AnomalyClass::HumanCollision, "3", 1.0, 0.5, 25.0))
        .with_injector(AnomalyInjector::new(AnomalyClass::ObjectSlip, "3", 1.0, 0.0, 1.0).with_rise(0.4))
        .with_policy(PolicyCounts { node: "3".into(), class: AnomalyClass::NoObject, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let sc = adaptation_over_adaptation(3).unwrap();
        let text = sc.to_toml_string().unwrap();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), sc);
    }

    #[test]
    fn injectors_are_sorted_on_load() {
        let mut sc = nominal(1)
            .with_injector(AnomalyInjector::new(AnomalyClass::HumanCollision, "3", 0.5, 0.3, 10.0))
            .with_injector(AnomalyInjector::new(AnomalyClass::HumanCollision, "1", 1.5, 0.3, 10.0));
        assert_eq!(sc.injectors[0].node, "1");
        sc.injectors.swap(0, 1);
        assert!(sc.validate().is_err());
        let loaded = Scenario::from_toml_str(&sc.to_toml_string().unwrap()).unwrap();
        assert_eq!(loaded.injectors[0].node, "1");
    }

    #[test]
    fn suite_cycles_over_every_table_key() {
        let suite = reenactment_suite(26, 5).unwrap();
        let keys = table_keys();
        for (i, sc) in suite.iter().enumerate() {
            let (node, class) = &keys[i % keys.len()];
            assert_eq!(sc.injectors.len(), 1);
            assert_eq!(&sc.injectors[0].node, node);
            assert_eq!(sc.injectors[0].class, *class);
            sc.validate().unwrap();
        }
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let sc = Scenario::from_toml_str("name = \"x\"\nseed = 4\n").unwrap();
        assert_eq!(sc.modality, LabelModality::Perfect);
        assert_eq!(sc.budget_factor, DEFAULT_BUDGET_FACTOR);
        assert_eq!(sc.world, WorldConfig::default());
    }
}
