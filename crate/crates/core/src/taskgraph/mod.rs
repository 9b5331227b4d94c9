//! Task graph of milestones and adaptive branches, re-enactment policies and the recovery critic.

mod critic;
mod policy;
mod transform;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::introspect::AnomalyClass;

pub use critic::{decide, CriticState, RecoveryAction, SelectionMode};
pub use policy::{kitting_counts, learn_reenactment, PolicyCounts, ReEnactmentPolicy};
pub use transform::{pose_from_array, pose_to_array, validate_pose, GoalTransform};

pub type NodeId = String;

/// Registry key for an adaptive branch.
pub fn compound_key(node: &str, class: AnomalyClass) -> String {
    format!("nominal_node_({node})_anomaly_type_({})", class.long_name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Nominal,
    Adaptive { parent: NodeId, class: AnomalyClass },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSpec {
    /// Goal pose fixed by the task layout.
    Fixed(Matrix4<f64>),
    Relative(GoalTransform),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub skill_ref: String,
    pub introspection_ref: String,
    pub goal: GoalSpec,
    /// `None` for the terminal milestone.
    pub successor: Option<NodeId>,
}

impl Node {
    pub fn is_adaptive(&self) -> bool {
        matches!(self.kind, NodeKind::Adaptive { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Next {
    Node(NodeId),
    /// Operator demonstration required before continuing.
    Pause,
    End,
}

#[derive(Debug, Clone, Copy)]
pub enum Outcome<'a> {
    Success,
    Recovery(&'a RecoveryAction),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskGraph {
    pub start: NodeId,
    pub nodes: BTreeMap<NodeId, Node>,
    /// Keyed by [`compound_key`].
    pub policies: BTreeMap<String, ReEnactmentPolicy>,
    /// Compound key → adaptive node id.
    pub registry: BTreeMap<String, NodeId>,
}

impl TaskGraph {
    /// Chain of nominal milestones `(id, skill, goal)` in execution order.
    pub fn chain(milestones: &[(&str, &str, Matrix4<f64>)]) -> Result<Self> {
        let first = milestones.first().ok_or_else(|| Error::Graph("empty milestone list".into()))?;
        let mut nodes = BTreeMap::new();
        for (i, (id, skill, goal)) in milestones.iter().enumerate() {
            validate_pose(goal)?;
            let node = Node {
                id: id.to_string(),
                kind: NodeKind::Nominal,
                skill_ref: skill.to_string(),
                introspection_ref: skill.to_string(),
                goal: GoalSpec::Fixed(*goal),
                successor: milestones.get(i + 1).map(|m| m.0.to_string()),
            };
            if nodes.insert(id.to_string(), node).is_some() {
                return Err(Error::Graph(format!("duplicate node {id}")));
            }
        }
        let g = TaskGraph { start: first.0.to_string(), nodes, policies: BTreeMap::new(), registry: BTreeMap::new() };
        g.validate()?;
        Ok(g)
    }

    pub fn node(&self, id: &str) -> Result<&Node> {
        self.nodes.get(id).ok_or_else(|| Error::Graph(format!("unknown node {id}")))
    }

    pub fn add_policies(&mut self, policies: Vec<ReEnactmentPolicy>) -> Result<()> {
        for p in policies {
            self.node(&p.node)?;
            for target in p.theta.keys() {
                self.node(target)?;
            }
            self.policies.insert(p.key(), p);
        }
        Ok(())
    }

    pub fn policy(&self, node: &str, class: AnomalyClass) -> Option<&ReEnactmentPolicy> {
        self.policies.get(&compound_key(node, class))
    }

    /// Nominal milestones in execution order.
    pub fn milestones(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = Some(self.start.clone());
        while let Some(id) = cur {
            if out.contains(&id) || out.len() > self.nodes.len() {
                break;
            }
            cur = self.nodes.get(&id).and_then(|n| n.successor.clone());
            out.push(id);
        }
        out
    }

    /// Nominal milestone a node belongs to (itself for milestones).
    pub fn root_milestone(&self, id: &str) -> Result<NodeId> {
        let mut cur = self.node(id)?;
        while let NodeKind::Adaptive { parent, .. } = &cur.kind {
            cur = self.node(parent)?;
        }
        Ok(cur.id.clone())
    }

    /// `id` followed by its chain of adaptive parents.
    pub fn lineage(&self, id: &str) -> Result<Vec<NodeId>> {
        let mut out = vec![id.to_string()];
        let mut cur = self.node(id)?;
        while let NodeKind::Adaptive { parent, .. } = &cur.kind {
            out.push(parent.clone());
            cur = self.node(parent)?;
        }
        Ok(out)
    }

    /// Successors exist, milestones form an acyclic chain, branches rejoin at milestones.
    pub fn validate(&self) -> Result<()> {
        self.node(&self.start)?;
        for n in self.nodes.values() {
            if let Some(s) = &n.successor {
                let succ = self.node(s)?;
                if succ.is_adaptive() {
                    return Err(Error::Graph(format!("{} continues into adaptive node {s}", n.id)));
                }
            }
            if let NodeKind::Adaptive { parent, .. } = &n.kind {
                self.node(parent)?;
                if !matches!(n.goal, GoalSpec::Relative(_)) {
                    return Err(Error::Graph(format!("adaptive node {} lacks a goal transform", n.id)));
                }
            }
        }
        let chain = self.milestones();
        let last = self.node(chain.last().expect("non-empty chain"))?;
        if last.successor.is_some() {
            return Err(Error::Graph("milestone successors form a cycle".into()));
        }
        for (key, id) in &self.registry {
            self.node(id).map_err(|_| Error::Graph(format!("registry key {key} points at missing node {id}")))?;
        }
        Ok(())
    }

    /// Adds a branch for `(parent, class)`; the node inherits the parent's policies and rejoins
    /// at the parent's ensuing milestone.
    pub fn insert_adaptive(
        &mut self,
        parent: &str,
        class: AnomalyClass,
        skill_ref: impl Into<String>,
        transform: GoalTransform,
    ) -> Result<NodeId> {
        let key = compound_key(parent, class);
        if self.registry.contains_key(&key) {
            return Err(Error::AlreadyRegistered(key));
        }
        let p = self.node(parent)?.clone();
        let n_children = self.nodes.values().filter(|n| matches!(&n.kind, NodeKind::Adaptive { parent: q, .. } if q == parent)).count();
        let id = format!("{parent}.{}", n_children + 1);
        let skill_ref = skill_ref.into();
        let node = Node {
            id: id.clone(),
            kind: NodeKind::Adaptive { parent: parent.to_string(), class },
            introspection_ref: skill_ref.clone(),
            skill_ref,
            goal: GoalSpec::Relative(transform),
            successor: p.successor.clone(),
        };
        let inherited: Vec<ReEnactmentPolicy> =
            self.policies.values().filter(|pol| pol.node == parent).map(|pol| pol.relabeled(&id)).collect();
        for pol in inherited {
            self.policies.insert(pol.key(), pol);
        }
        self.nodes.insert(id.clone(), node);
        self.registry.insert(key, id.clone());
        Ok(id)
    }

    pub fn adaptive_for(&self, node: &str, class: AnomalyClass) -> Option<&NodeId> {
        self.registry.get(&compound_key(node, class))
    }

    /// Absolute goal pose of a node given its parent's goal.
    pub fn resolve_goal(&self, id: &str, parent_goal: &Matrix4<f64>) -> Result<Matrix4<f64>> {
        match &self.node(id)?.goal {
            GoalSpec::Fixed(g) => Ok(*g),
            GoalSpec::Relative(t) => Ok(t.apply(parent_goal)),
        }
    }

    /// Goal pose with adaptive transforms composed down from the root milestone.
    pub fn absolute_goal(&self, id: &str) -> Result<Matrix4<f64>> {
        let lineage = self.lineage(id)?;
        let mut goal = Matrix4::identity();
        for n in lineage.iter().rev() {
            goal = self.resolve_goal(n, &goal)?;
        }
        Ok(goal)
    }

    pub fn next_node(&self, id: &str, outcome: Outcome<'_>) -> Result<Next> {
        let node = self.node(id)?;
        match outcome {
            Outcome::Success => match &node.successor {
                None => Ok(Next::End),
                Some(s) => {
                    self.node(s)?;
                    Ok(Next::Node(s.clone()))
                }
            },
            Outcome::Recovery(RecoveryAction::ReEnact(t)) | Outcome::Recovery(RecoveryAction::ExecuteAdaptive(t)) => {
                self.node(t)?;
                Ok(Next::Node(t.clone()))
            }
            Outcome::Recovery(RecoveryAction::RequestAdaptation) => Ok(Next::Pause),
        }
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let g: TaskGraph = serde_json::from_reader(r)?;
        g.validate()?;
        Ok(g)
    }
}

pub const KITTING_SKILLS: [(&str, &str); 5] =
    [("1", "move_to_pick"), ("2a", "pick_approach"), ("2b", "pick_lift"), ("3", "move_to_place"), ("4", "place")];

/// Kitting chain `1 → 2a → 2b → 3 → 4` with the human-selected re-enactment policies.
pub fn kitting_graph(goals: &[Matrix4<f64>; 5]) -> Result<TaskGraph> {
    let milestones: Vec<(&str, &str, Matrix4<f64>)> = KITTING_SKILLS.iter().zip(goals).map(|((id, s), g)| (*id, *s, *g)).collect();
    let mut g = TaskGraph::chain(&milestones)?;
    g.add_policies(learn_reenactment(&kitting_counts())?)?;
    Ok(g)
}
