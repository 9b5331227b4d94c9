//! Experiment harness: training pipelines, episode runs, metrics and reports.

pub mod cli;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod run_dir;

pub use error::{HarnessError, Result};
pub use metrics::{ConfusionMatrix, DetectionCounts, MetricsReport};
pub use pipeline::ExperimentConfig;
