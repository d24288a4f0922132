//! Desk-scale laboratory for physical intrinsic motivation.
//!
//! The crate is organised as a pipeline:
//!
//! - [`sim`]: deterministic particle simulator producing scenario trajectories.
//! - [`wm`]: trainable forward world models with k-step rollouts and checkpoints.
//! - [`irf`]: intrinsic reward functions (scene features, RND, adversarial,
//!   disagreement, δ-progress) and the checkpoint/rollout sweep.
//! - [`stats`]: correlations, split-half reliability, lasso composites and
//!   split-based evaluation.
//! - [`harness`]: configuration, synthetic raters, persistence, reports and
//!   the end-to-end pipeline.

mod codec;
pub mod error;
pub mod harness;
pub mod irf;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod wm;

pub use error::{Error, Result};
