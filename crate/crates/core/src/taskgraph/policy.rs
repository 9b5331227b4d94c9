use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{compound_key, NodeId};
use crate::error::{Error, Result};
use crate::introspect::AnomalyClass;

/// Observed re-enactment target selections for one (node, class) key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCounts {
    pub node: NodeId,
    pub class: AnomalyClass,
    pub counts: BTreeMap<NodeId, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReEnactmentPolicy {
    pub node: NodeId,
    pub class: AnomalyClass,
    pub counts: BTreeMap<NodeId, u32>,
    pub theta: BTreeMap<NodeId, f64>,
}

impl ReEnactmentPolicy {
    pub fn key(&self) -> String {
        compound_key(&self.node, self.class)
    }

    /// Most probable target; ties go to the lexicographically smallest node id.
    pub fn argmax(&self) -> &NodeId {
        let mut best: Option<(&NodeId, f64)> = None;
        for (n, &p) in &self.theta {
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((n, p));
            }
        }
        best.expect("policy has at least one target").0
    }

    /// Inverse-CDF draw with `u ∈ [0, 1)`.
    pub fn sample(&self, u: f64) -> &NodeId {
        let mut acc = 0.0;
        let mut last = None;
        for (n, &p) in &self.theta {
            acc += p;
            last = Some(n);
            if u < acc {
                return n;
            }
        }
        last.expect("policy has at least one target")
    }

    pub fn relabeled(&self, node: &str) -> Self {
        ReEnactmentPolicy { node: node.to_string(), ..self.clone() }
    }
}

/// Normalizes each key's counts into target probabilities.
pub fn learn_reenactment(table: &[PolicyCounts]) -> Result<Vec<ReEnactmentPolicy>> {
    let mut seen = std::collections::BTreeSet::new();
    table
        .iter()
        .map(|c| {
            let key = compound_key(&c.node, c.class);
            if !seen.insert(key.clone()) {
                return Err(Error::invalid(format!("duplicate policy key {key}")));
            }
            let total: u32 = c.counts.values().sum();
            if total == 0 {
                return Err(Error::invalid(format!("policy {key} has no positive count")));
            }
            let theta = c.counts.iter().map(|(n, &k)| (n.clone(), k as f64 / total as f64)).collect();
            Ok(ReEnactmentPolicy { node: c.node.clone(), class: c.class, counts: c.counts.clone(), theta })
        })
        .collect()
}

fn row(node: &str, class: AnomalyClass, counts: &[(&str, u32)]) -> PolicyCounts {
    PolicyCounts { node: node.into(), class, counts: counts.iter().map(|(n, k)| (n.to_string(), *k)).collect() }
}

/// Human-selected re-enactment targets for the kitting task.
///
/// The pick behavior spans nodes `2a` and `2b`: a source "node 2" applies to both, and a
/// target "node 2" restarts the pick at `2a`.
pub fn kitting_counts() -> Vec<PolicyCounts> {
    use AnomalyClass::*;
    let mut out = vec![row("1", HumanCollision, &[("1", 25)])];
    for n in ["2a", "2b"] {
        out.push(row(n, HumanCollision, &[("2a", 30)]));
    }
    out.push(row("3", HumanCollision, &[("3", 25)]));
    out.push(row("4", HumanCollision, &[("4", 25)]));
    for n in ["2a", "2b"] {
        out.push(row(n, ToolCollision, &[("1", 25)]));
    }
    out.push(row("3", ToolCollision, &[("3", 5)]));
    for n in ["2a", "2b"] {
        out.push(row(n, ObjectSlip, &[("2a", 20), ("1", 5)]));
    }
    out.push(row("3", ObjectSlip, &[("2a", 25)]));
    for n in ["2a", "2b"] {
        out.push(row(n, NoObject, &[("2a", 24), ("1", 1)]));
    }
    out
}
