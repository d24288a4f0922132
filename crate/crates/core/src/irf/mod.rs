//! Intrinsic reward functions.
//!
//! Each world-model based IRF turns a trajectory into a per-frame reward
//! series whose sum is the stimulus' total intrinsic reward. Simple scene
//! features are whole-trajectory statistics and enter the analysis directly.

mod features;
mod rewards;
mod rnd;
mod sweep;
mod table;

pub use features::{
    covariance_trace, scene_features, scene_features_with, FeatureVector, CATALOG,
    DEFAULT_CONTACT_THRESHOLD,
};
pub use rewards::{
    adversarial_reward, delta_progress_checkpoints, delta_progress_reward, disagreement_from,
    disagreement_reward, ensemble_variance, Rollouts,
};
pub use rnd::{rnd_init, rnd_reward, rnd_train, RndPair};
pub use sweep::{delta_irf_name, sweep, Member, SweepSpec};
pub use table::{parse_ir_table, read_ir_table, write_ir_table, IrRow, IrTable, StimulusInfo};

/// Per-frame intrinsic rewards of one trajectory under one IRF.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardSeries {
    pub trajectory_id: String,
    pub irf: String,
    pub per_step: Vec<f64>,
    pub total: f64,
    /// Identifies the checkpoints, horizon and δ the series was computed with.
    pub params_fingerprint: String,
}

impl RewardSeries {
    pub fn new(id: &str, irf: &str, per_step: Vec<f64>, fingerprint: String) -> Self {
        RewardSeries {
            trajectory_id: id.to_string(),
            irf: irf.to_string(),
            total: per_step.iter().sum(),
            per_step,
            params_fingerprint: fingerprint,
        }
    }
}

/// Sum of the per-frame rewards.
pub fn total_ir(series: &RewardSeries) -> f64 {
    series.per_step.iter().sum()
}
