//! Building blocks for an introspective manipulation pipeline.
//!
//! - [`signals`]: multimodal sensor ingestion, resampling, alignment, scaling and the
//!   17-dimensional feature map.
//! - [`dmp`]: dynamic movement primitives learned from a single demonstration.
//! - [`hmm`]: sticky HDP-HMM / finite HMM allocation with Gaussian or VAR(1) emissions,
//!   trained by truncated variational coordinate ascent with merge/delete moves.
//! - [`introspect`]: forward-gradient anomaly identification and windowed classification.
//! - [`taskgraph`]: milestones, adaptive branches and the recovery critic.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dmp;
pub mod error;
pub mod hmm;
pub mod introspect;
pub mod numeric;
pub mod signals;
pub mod taskgraph;

pub use error::{Error, Result};
