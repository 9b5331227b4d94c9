//! Synthetic kitting world: ground-truth skill dynamics, scripted anomaly injection, model
//! library training and closed-loop episodes.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod corpus;
pub mod episode;
pub mod error;
pub mod inject;
pub mod library;
pub mod profile;
pub mod scenario;
pub mod seeds;
pub mod world;

pub use episode::{run_episode, run_episodes, EpisodeOutcome, ExecutionTrace, LabelEvent, StepRecord};
pub use error::{Result, SimError};
pub use inject::{inject, AnomalyInjector, InjectionContext};
pub use library::{train_library, train_skill, ModelLibrary, SkillModels, TrainedClassifier, TrainingConfig};
pub use profile::{SkillCatalog, SkillProfile};
pub use scenario::{AdaptationDemo, LabelModality, Scenario};
pub use world::{WorldConfig, WorldState};
