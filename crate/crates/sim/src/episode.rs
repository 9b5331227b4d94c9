//! Closed-loop sense-plan-act-introspect episodes over the synthetic world.

use std::collections::BTreeMap;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use spai_core::introspect::{AnomalyClass, Detector};
use spai_core::signals::{extract_features, MultimodalSample, OnlineFeaturizer, FEATURE_DIM};
use spai_core::taskgraph::{
    decide, learn_reenactment, pose_from_array, CriticState, GoalTransform, Next, Outcome, RecoveryAction, TaskGraph,
};

use crate::error::{Result, SimError};
use crate::inject::{inject, AnomalyInjector, InjectionContext};
use crate::library::{train_skill, ModelLibrary, SkillModels};
use crate::profile::{sample_count, Conditions, SkillCatalog, SkillMotion};
use crate::scenario::{LabelModality, Scenario};
use crate::seeds::derive;
use crate::world::{WorldState, HOME, TOOL_DOWN};

/// One 50 Hz tick of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Episode time (s).
    pub t: f64,
    pub node: String,
    /// Unscaled features.
    pub features: [f64; FEATURE_DIM],
    pub gradient: f64,
    pub flag: bool,
    pub label: Option<AnomalyClass>,
    pub truth: Option<AnomalyClass>,
    pub action: Option<RecoveryAction>,
}

/// What happened at a flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub t: f64,
    pub node: String,
    /// `None` when the flag was dismissed.
    pub label: Option<AnomalyClass>,
    pub truth: Option<AnomalyClass>,
    pub action: Option<RecoveryAction>,
    /// Node inserted by an adaptation at this flag.
    pub inserted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Success,
    Failure(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceCounters {
    pub ticks: usize,
    pub budget_ticks: usize,
    pub executions: usize,
    pub flags: usize,
    /// Perfect-modality flags with no ground-truth anomaly behind them.
    pub dismissed_flags: usize,
    pub misclassifications: usize,
    pub reenactments: usize,
    pub adaptive_executions: usize,
    pub adaptations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub scenario: String,
    pub seed: u64,
    pub modality: LabelModality,
    pub steps: Vec<StepRecord>,
    pub events: Vec<LabelEvent>,
    /// Raw sensor stream in episode time.
    pub samples: Vec<MultimodalSample>,
    /// Nodes in execution order.
    pub visited: Vec<String>,
    pub counters: TraceCounters,
    pub graph: TaskGraph,
    outcome: Option<EpisodeOutcome>,
}

impl ExecutionTrace {
    fn new(scenario: &Scenario, graph: TaskGraph) -> Self {
        ExecutionTrace {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            modality: scenario.modality,
            steps: Vec::new(),
            events: Vec::new(),
            samples: Vec::new(),
            visited: Vec::new(),
            counters: TraceCounters::default(),
            graph,
            outcome: None,
        }
    }

    fn finish(&mut self, outcome: EpisodeOutcome) {
        assert!(self.outcome.is_none(), "episode outcome recorded twice");
        self.outcome = Some(outcome);
    }

    pub fn outcome(&self) -> &EpisodeOutcome {
        self.outcome.as_ref().expect("finished trace")
    }

    pub fn succeeded(&self) -> bool {
        matches!(self.outcome, Some(EpisodeOutcome::Success))
    }

    /// Whether a flag was mislabeled and the episode still reached the end.
    pub fn self_healed(&self) -> bool {
        self.succeeded() && self.counters.misclassifications > 0
    }
}

/// Result of one node execution.
enum NodeResult {
    Completed,
    Flagged {
        label: AnomalyClass,
    },
    /// Budget ran out mid-execution.
    OutOfBudget,
}

struct Episode<'a> {
    library: &'a ModelLibrary,
    scenario: &'a Scenario,
    graph: TaskGraph,
    catalog: SkillCatalog,
    adaptive_models: BTreeMap<String, SkillModels>,
    critic: CriticState,
    world: WorldState,
    occurrences: BTreeMap<String, u32>,
    clock: f64,
    trace: ExecutionTrace,
}

fn translation(m: &Matrix4<f64>) -> [f64; 3] {
    [m[(0, 3)], m[(1, 3)], m[(2, 3)]]
}

fn pose_of(p: [f64; 3]) -> Matrix4<f64> {
    pose_from_array(&[p[0], p[1], p[2], TOOL_DOWN[0], TOOL_DOWN[1], TOOL_DOWN[2], TOOL_DOWN[3]])
}

impl<'a> Episode<'a> {
    fn models(&self, skill: &str) -> Result<&SkillModels> {
        match self.adaptive_models.get(skill) {
            Some(m) => Ok(m),
            None => self.library.skill(skill),
        }
    }

    /// Goal of `id` for the current object: the object's milestone goal composed with the
    /// adaptive transforms along the lineage.
    fn goal(&self, id: &str) -> Result<Matrix4<f64>> {
        let goals = self.scenario.world.kitting_goals(self.world.current)?;
        let lineage = self.graph.lineage(id)?;
        let root = lineage.last().expect("lineage contains the node");
        let idx = self.milestone_index(root)?;
        let mut goal = goals[idx];
        for n in lineage.iter().rev().skip(1) {
            goal = self.graph.resolve_goal(n, &goal)?;
        }
        Ok(goal)
    }

    fn milestone_index(&self, root: &str) -> Result<usize> {
        self.graph.milestones().iter().position(|m| m == root).ok_or_else(|| SimError::invalid(format!("node {root} is not a milestone")))
    }

    /// Where execution of `id` starts: the goal of the preceding milestone.
    fn start(&self, id: &str) -> Result<[f64; 3]> {
        let root = self.graph.root_milestone(id)?;
        let idx = self.milestone_index(&root)?;
        if idx == 0 {
            return Ok(HOME);
        }
        let prev = self.graph.milestones()[idx - 1].clone();
        Ok(translation(&self.goal(&prev)?))
    }

    fn out_of_budget(&self) -> bool {
        self.trace.counters.ticks >= self.trace.counters.budget_ticks
    }

    /// Ground truth for a flag at local time `t`: object loss outranks collisions, later onsets
    /// outrank earlier ones, and a missing object explains anything else.
    fn truth(firing: &[AnomalyInjector], t: f64, object_missing: bool) -> Option<AnomalyClass> {
        let pick = firing
            .iter()
            .filter(|i| i.explains(t))
            .max_by(|a, b| (a.removes_object(), a.onset).partial_cmp(&(b.removes_object(), b.onset)).unwrap_or(std::cmp::Ordering::Equal));
        match pick {
            Some(i) => Some(i.class),
            None if object_missing => Some(AnomalyClass::NoObject),
            None => None,
        }
    }

    fn execute(&mut self, id: &str) -> Result<NodeResult> {
        let node = self.graph.node(id)?.clone();
        let occurrence = {
            let c = self.occurrences.entry(id.to_string()).or_default();
            *c += 1;
            *c
        };
        let exec_index = self.trace.counters.executions as u64;
        self.trace.counters.executions += 1;
        if node.is_adaptive() {
            self.trace.counters.adaptive_executions += 1;
        }
        self.trace.visited.push(id.to_string());

        let profile = self.catalog.profile(&node.skill_ref)?.clone();
        let expects_object = profile.expects_object();
        if !expects_object && self.world.holding {
            // the arm drops what it holds back into the pick area before retrying
            self.world.holding = false;
        }
        let object_present = !expects_object || self.world.holding;
        let cond = Conditions { mass: self.scenario.world.objects[self.world.current].mass, object_present };
        let start = self.start(id)?;
        let goal = translation(&self.goal(id)?);
        let seed = derive(self.scenario.seed, "exec", exec_index);
        let mut trial = self.catalog.render(&node.skill_ref, &start, &goal, &cond, seed, profile.duration, 1.0)?;
        let firing: Vec<AnomalyInjector> = self.scenario.injectors.iter().filter(|i| i.fires_on(id, occurrence)).cloned().collect();
        for (k, inj) in firing.iter().enumerate() {
            let ctx = InjectionContext { profile: &profile, mass: cond.mass, seed: derive(seed, "inject", k as u64) };
            trial = inject(&trial, inj, &ctx)?;
        }

        let models = self.models(&node.introspection_ref)?.clone();
        let mut detector = Detector::new(&models.identification)?;
        let mut featurizer = OnlineFeaturizer::new(self.library.config.std_window);
        let mut flagged = None;
        let mut executed = 0;
        for s in &trial.samples {
            let raw = featurizer.push(s);
            let scaled = models.scaling.apply_frame(&raw.to_dvector());
            let (gradient, flag) = detector.push(s.t, &scaled)?;
            let mut global = s.clone();
            global.t += self.clock;
            self.trace.samples.push(global);
            self.trace.steps.push(StepRecord {
                t: self.clock + s.t,
                node: id.to_string(),
                features: raw.to_array(),
                gradient,
                flag: flag.is_some(),
                label: None,
                truth: None,
                action: None,
            });
            executed += 1;
            self.trace.counters.ticks += 1;
            if flag.is_some() {
                self.trace.counters.flags += 1;
                let truth = Self::truth(&firing, s.t, expects_object && !object_present);
                let label = match self.scenario.modality {
                    LabelModality::Perfect => truth,
                    LabelModality::Imperfect => {
                        let raw_seq = extract_features(&trial, self.library.config.std_window)?;
                        Some(self.library.classifier()?.classify_at(&raw_seq, s.t)?.class)
                    }
                };
                let last = self.trace.steps.last_mut().expect("step just recorded");
                last.label = label;
                last.truth = truth;
                match label {
                    Some(class) => {
                        if truth != Some(class) {
                            self.trace.counters.misclassifications += 1;
                        }
                        flagged = Some((s.t, class, truth));
                        break;
                    }
                    None => {
                        self.trace.counters.dismissed_flags += 1;
                        self.trace.events.push(LabelEvent {
                            t: self.clock + s.t,
                            node: id.to_string(),
                            label: None,
                            truth: None,
                            action: None,
                            inserted: None,
                        });
                    }
                }
            }
            if self.out_of_budget() {
                break;
            }
        }
        let t_end = executed as f64 / self.catalog.rate_hz;
        let t_stop = flagged.map_or(t_end, |(t, _, _)| t);
        if firing.iter().any(|i| i.removes_object() && i.onset <= t_stop) {
            self.world.holding = false;
        }
        let result = match flagged {
            Some((t, label, truth)) => {
                self.trace.events.push(LabelEvent {
                    t: self.clock + t,
                    node: id.to_string(),
                    label: Some(label),
                    truth,
                    action: None,
                    inserted: None,
                });
                NodeResult::Flagged { label }
            }
            None if executed < trial.len() => NodeResult::OutOfBudget,
            None => {
                let lost = firing.iter().any(|i| i.removes_object());
                if profile.contact.from == 0.0 && profile.contact.to > 0.0 {
                    self.world.holding = !lost;
                } else if profile.contact.from > 0.0 && profile.contact.to == 0.0 && self.world.holding {
                    self.world.placed[self.world.current] = true;
                    self.world.holding = false;
                }
                NodeResult::Completed
            }
        };
        self.clock += t_end;
        Ok(result)
    }

    /// Learns the demonstrated skill and inserts it as an adaptive branch of `parent`.
    fn adapt(&mut self, parent: &str, class: AnomalyClass) -> Result<std::result::Result<String, String>> {
        let Some(demo) = self.scenario.demo(parent, class).cloned() else {
            return Ok(Err(format!("no demonstration available for {class}@{parent}")));
        };
        let parent_node = self.graph.node(parent)?.clone();
        let base = self.catalog.profile(&parent_node.skill_ref)?.clone();
        let skill = format!("rec_{}_{}", parent.replace('.', "_"), class.code());
        let motion = SkillMotion::from_waypoints(&skill, &demo.waypoints, base.duration * base.motion_fraction, self.catalog.rate_hz)?;
        let demo_goal = pose_of(motion.goal);
        self.catalog.register_derived(&skill, &parent_node.skill_ref, motion)?;
        let transform = GoalTransform::between(&self.goal(parent)?, &demo_goal)?;
        let id = self.graph.insert_adaptive(parent, class, skill.clone(), transform)?;
        let seed = derive(self.scenario.seed, "adapt", self.trace.counters.adaptations as u64);
        let models = train_skill(&self.catalog, &skill, &id, &self.library.config, seed)?;
        self.adaptive_models.insert(skill, models);
        self.trace.counters.adaptations += 1;
        Ok(Ok(id))
    }

    fn run(mut self) -> Result<ExecutionTrace> {
        let n_objects = self.scenario.world.objects.len();
        for object in 0..n_objects {
            self.world.current = object;
            self.world.holding = false;
            let mut current = self.graph.start.clone();
            loop {
                match self.execute(&current)? {
                    NodeResult::OutOfBudget => return Ok(self.fail("step budget exhausted")),
                    NodeResult::Completed => {
                        self.critic.on_progress(&self.graph, &current)?;
                        match self.graph.next_node(&current, Outcome::Success)? {
                            Next::Node(n) => current = n,
                            Next::End => break,
                            Next::Pause => unreachable!("success never pauses"),
                        }
                    }
                    NodeResult::Flagged { label } => {
                        let seed = derive(self.scenario.seed, "critic", self.trace.counters.flags as u64);
                        let action = match decide(&mut self.critic, &self.graph, &current, label, seed) {
                            Ok(a) => a,
                            Err(spai_core::Error::MissingPolicy { node, class }) => {
                                return Ok(self.fail(&format!("no re-enactment policy for {class}@{node}")));
                            }
                            Err(e) => return Err(e.into()),
                        };
                        self.record_action(&action);
                        current = match self.graph.next_node(&current, Outcome::Recovery(&action))? {
                            Next::Node(n) => {
                                if matches!(action, RecoveryAction::ReEnact(_)) {
                                    self.trace.counters.reenactments += 1;
                                }
                                n
                            }
                            Next::Pause => match self.adapt(&current, label)? {
                                Ok(id) => {
                                    self.trace.events.last_mut().expect("flag event").inserted = Some(id.clone());
                                    id
                                }
                                Err(reason) => return Ok(self.fail(&reason)),
                            },
                            Next::End => unreachable!("recovery never ends the task"),
                        };
                    }
                }
                if self.out_of_budget() {
                    return Ok(self.fail("step budget exhausted"));
                }
            }
            if !self.world.placed[object] {
                let reason = format!("object {} was not placed", self.scenario.world.objects[object].id);
                return Ok(self.fail(&reason));
            }
        }
        self.trace.graph = self.graph.clone();
        self.trace.finish(EpisodeOutcome::Success);
        Ok(self.trace)
    }

    fn record_action(&mut self, action: &RecoveryAction) {
        if let Some(step) = self.trace.steps.last_mut() {
            step.action = Some(action.clone());
        }
        if let Some(ev) = self.trace.events.last_mut() {
            ev.action = Some(action.clone());
        }
    }

    fn fail(mut self, reason: &str) -> ExecutionTrace {
        self.trace.graph = self.graph.clone();
        self.trace.finish(EpisodeOutcome::Failure(reason.to_string()));
        self.trace
    }
}

/// Nominal episode length in ticks: every milestone once per object.
pub fn nominal_ticks(graph: &TaskGraph, catalog: &SkillCatalog, n_objects: usize) -> Result<usize> {
    let mut n = 0;
    for id in graph.milestones() {
        let skill = &graph.node(&id)?.skill_ref;
        n += sample_count(catalog.default_duration(skill)?, catalog.rate_hz);
    }
    Ok(n * n_objects)
}

/// Runs one scripted episode. Deterministic in `(graph, library, scenario)`.
pub fn run_episode(graph: &TaskGraph, library: &ModelLibrary, scenario: &Scenario) -> Result<ExecutionTrace> {
    scenario.validate()?;
    let mut graph = graph.clone();
    if !scenario.extra_policies.is_empty() {
        graph.add_policies(learn_reenactment(&scenario.extra_policies)?)?;
    }
    if scenario.modality == LabelModality::Imperfect {
        library.classifier()?;
    }
    let budget = nominal_ticks(&graph, &library.catalog, scenario.world.objects.len())? as f64 * scenario.budget_factor;
    let mut trace = ExecutionTrace::new(scenario, graph.clone());
    trace.counters.budget_ticks = budget.round() as usize;
    let ep = Episode {
        library,
        scenario,
        graph,
        catalog: library.catalog.clone(),
        adaptive_models: BTreeMap::new(),
        critic: CriticState::new(scenario.selection),
        world: WorldState::new(&scenario.world),
        occurrences: BTreeMap::new(),
        clock: 0.0,
        trace,
    };
    ep.run()
}

/// Episodes in parallel with results in input order.
pub fn run_episodes(graph: &TaskGraph, library: &ModelLibrary, scenarios: &[Scenario]) -> Vec<Result<ExecutionTrace>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(scenarios.len().max(1));
    let mut out: Vec<Option<Result<ExecutionTrace>>> = (0..scenarios.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..scenarios.len()).step_by(workers).map(|i| (i, run_episode(graph, library, &scenarios[i]))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("episode thread panicked") {
                out[i] = Some(r);
            }
        }
    });
    out.into_iter().map(|r| r.expect("every episode ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inj(class: AnomalyClass, onset: f64, magnitude: f64) -> AnomalyInjector {
        AnomalyInjector::new(class, "3", onset, 0.5, magnitude)
    }

    #[test]
    fn object_loss_outranks_collision() {
        let firing = [inj(AnomalyClass::HumanCollision, 1.0, 10.0), inj(AnomalyClass::ObjectSlip, 1.0, 1.0)];
        assert_eq!(Episode::truth(&firing, 1.1, false), Some(AnomalyClass::ObjectSlip));
    }

    #[test]
    fn later_collision_wins() {
        let firing = [inj(AnomalyClass::HumanCollision, 0.5, 10.0), inj(AnomalyClass::ToolCollision, 0.9, 10.0)];
        assert_eq!(Episode::truth(&firing, 1.0, false), Some(AnomalyClass::ToolCollision));
    }

    #[test]
    fn missing_object_explains_unattributed_flags() {
        assert_eq!(Episode::truth(&[], 0.1, true), Some(AnomalyClass::NoObject));
        assert_eq!(Episode::truth(&[], 0.1, false), None);
        let late = [inj(AnomalyClass::HumanCollision, 2.0, 10.0)];
        assert_eq!(Episode::truth(&late, 0.5, false), None);
    }
}
