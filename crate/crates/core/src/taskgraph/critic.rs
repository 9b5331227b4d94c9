use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{compound_key, NodeId, TaskGraph};
use crate::error::{Error, Result};
use crate::introspect::AnomalyClass;

/// Consecutive unresolved re-enactments that trigger an adaptation request.
pub const MAX_REENACTMENTS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", content = "node", rename_all = "snake_case")]
pub enum RecoveryAction {
    ReEnact(NodeId),
    ExecuteAdaptive(NodeId),
    RequestAdaptation,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    #[default]
    Argmax,
    Sample,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CriticState {
    pub counters: BTreeMap<String, u32>,
    pub last_action: Option<RecoveryAction>,
    pub mode: SelectionMode,
}

impl CriticState {
    pub fn new(mode: SelectionMode) -> Self {
        CriticState { mode, ..Default::default() }
    }

    pub fn counter(&self, node: &str, class: AnomalyClass) -> u32 {
        self.counters.get(&compound_key(node, class)).copied().unwrap_or(0)
    }

    /// Clears counters of `node` and its adaptive ancestry after a successful traversal.
    pub fn on_progress(&mut self, graph: &TaskGraph, node: &str) -> Result<()> {
        for id in graph.lineage(node)? {
            let prefix = format!("nominal_node_({id})_");
            self.counters.retain(|k, _| !k.starts_with(&prefix));
        }
        Ok(())
    }

    pub fn reset(&mut self, node: &str, class: AnomalyClass) {
        self.counters.remove(&compound_key(node, class));
    }
}

/// Recovery decision for an anomaly of `class` flagged while executing `node`.
pub fn decide(critic: &mut CriticState, graph: &TaskGraph, node: &str, class: AnomalyClass, seed: u64) -> Result<RecoveryAction> {
    graph.node(node)?;
    let action = if let Some(id) = graph.adaptive_for(node, class) {
        RecoveryAction::ExecuteAdaptive(id.clone())
    } else if critic.counter(node, class) >= MAX_REENACTMENTS {
        RecoveryAction::RequestAdaptation
    } else {
        let policy =
            graph.policy(node, class).ok_or_else(|| Error::MissingPolicy { node: node.to_string(), class: class.code().to_string() })?;
        let target = match critic.mode {
            SelectionMode::Argmax => policy.argmax(),
            SelectionMode::Sample => policy.sample(ChaCha8Rng::seed_from_u64(seed).random::<f64>()),
        };
        *critic.counters.entry(compound_key(node, class)).or_default() += 1;
        RecoveryAction::ReEnact(target.clone())
    };
    critic.last_action = Some(action.clone());
    Ok(action)
}
