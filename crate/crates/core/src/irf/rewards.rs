//! World-model based rewards: adversarial, disagreement and δ-progress.

use super::RewardSeries;
use crate::sim::{SceneState, Trajectory};
use crate::wm::{mse, Checkpoint, ForwardModel};
use crate::{Error, Result};

/// Every `1..=kmax` step prediction of one model from every frame of a trajectory.
pub struct Rollouts {
    /// `preds[t][j]` is the `(j + 1)`-step prediction from `s_t`; shorter near the end.
    preds: Vec<Vec<SceneState>>,
}

fn check_horizon(traj: &Trajectory, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidInput("rollout length k must be >= 1".into()));
    }
    if k >= traj.len() {
        return Err(Error::InvalidInput(format!(
            "rollout length {k} needs more than {} states",
            traj.len()
        )));
    }
    Ok(())
}

impl Rollouts {
    pub fn compute(model: &dyn ForwardModel, traj: &Trajectory, kmax: usize) -> Result<Self> {
        check_horizon(traj, kmax)?;
        let t_len = traj.len();
        let preds = (0..t_len - 1)
            .map(|t| model.rollout_all(&traj.states[t], kmax.min(t_len - 1 - t)))
            .collect::<Result<_>>()?;
        Ok(Rollouts { preds })
    }

    /// `k`-step predictions for `t = 0 .. T−1−k`.
    pub fn at(&self, k: usize) -> Result<Vec<&SceneState>> {
        if k == 0 || self.preds.first().is_none_or(|p| p.len() < k) {
            return Err(Error::InvalidInput(format!(
                "rollout length {k} was not computed"
            )));
        }
        Ok(self
            .preds
            .iter()
            .take_while(|p| p.len() >= k)
            .map(|p| &p[k - 1])
            .collect())
    }

    /// `k`-step losses against the trajectory, one per valid start frame.
    pub fn losses(&self, traj: &Trajectory, k: usize) -> Result<Vec<f64>> {
        self.at(k)?
            .into_iter()
            .enumerate()
            .map(|(t, p)| mse(p, &traj.states[t + k]))
            .collect()
    }
}

pub fn adversarial_reward(
    model: &dyn ForwardModel,
    traj: &Trajectory,
    k: usize,
    id: &str,
) -> Result<RewardSeries> {
    let losses = Rollouts::compute(model, traj, k)?.losses(traj, k)?;
    Ok(RewardSeries::new(
        id,
        "adversarial",
        losses,
        format!("{}/k{k}", model.fingerprint()),
    ))
}

/// Mean over components of the across-member sample variance (divisor n−1).
pub fn ensemble_variance(preds: &[&SceneState]) -> Result<f64> {
    let m = preds.len();
    if m < 2 {
        return Err(Error::InvalidInput(
            "disagreement needs at least 2 ensemble members".into(),
        ));
    }
    let first = preds[0];
    if preds.iter().any(|p| p.object_index != first.object_index) {
        return Err(Error::LayoutMismatch(
            "ensemble predictions differ in layout".into(),
        ));
    }
    let rows: Vec<Vec<[f64; 6]>> = preds.iter().map(|p| p.features().collect()).collect();
    let n = rows[0].len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..6 {
            // Deviations from the first member: identical predictions give exactly 0.
            let base = rows[0][i][j];
            let mean = rows.iter().map(|r| r[i][j] - base).sum::<f64>() / m as f64;
            total += rows
                .iter()
                .map(|r| (r[i][j] - base - mean).powi(2))
                .sum::<f64>()
                / (m - 1) as f64;
        }
    }
    Ok(total / (n * 6) as f64)
}

pub fn disagreement_from(rollouts: &[&Rollouts], k: usize) -> Result<Vec<f64>> {
    let per_member = rollouts
        .iter()
        .map(|r| r.at(k))
        .collect::<Result<Vec<_>>>()?;
    let steps = per_member.first().map_or(0, |p| p.len());
    (0..steps)
        .map(|t| ensemble_variance(&per_member.iter().map(|p| p[t]).collect::<Vec<_>>()))
        .collect()
}

pub fn disagreement_reward(
    ensemble: &[&dyn ForwardModel],
    traj: &Trajectory,
    k: usize,
    id: &str,
) -> Result<RewardSeries> {
    if ensemble.len() < 2 {
        return Err(Error::InvalidInput(
            "disagreement needs at least 2 ensemble members".into(),
        ));
    }
    let rollouts = ensemble
        .iter()
        .map(|m| Rollouts::compute(*m, traj, k))
        .collect::<Result<Vec<_>>>()?;
    let per_step = disagreement_from(&rollouts.iter().collect::<Vec<_>>(), k)?;
    let fp: Vec<String> = ensemble.iter().map(|m| m.fingerprint()).collect();
    Ok(RewardSeries::new(
        id,
        "disagreement",
        per_step,
        format!("{}/k{k}", fp.join("+")),
    ))
}

/// `loss(old) − loss(new)` per frame; the only signed reward.
pub fn delta_progress_reward(
    old: &dyn ForwardModel,
    new: &dyn ForwardModel,
    traj: &Trajectory,
    k: usize,
    id: &str,
) -> Result<RewardSeries> {
    let a = Rollouts::compute(old, traj, k)?.losses(traj, k)?;
    let b = Rollouts::compute(new, traj, k)?.losses(traj, k)?;
    let per_step = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let fp = format!("{}-{}/k{k}", old.fingerprint(), new.fingerprint());
    Ok(RewardSeries::new(id, "delta_progress", per_step, fp))
}

/// δ-progress between two checkpoints of one training run.
pub fn delta_progress_checkpoints(
    old: &Checkpoint,
    new: &Checkpoint,
    traj: &Trajectory,
    k: usize,
    id: &str,
) -> Result<RewardSeries> {
    if old.params.arch != new.params.arch || old.params.net.sizes() != new.params.net.sizes() {
        return Err(Error::InvalidInput(
            "checkpoint architectures differ".into(),
        ));
    }
    if old.step > new.step {
        return Err(Error::InvalidInput(format!(
            "old checkpoint step {} is after new step {}",
            old.step, new.step
        )));
    }
    let mut s = delta_progress_reward(old, new, traj, k, id)?;
    s.irf = format!("delta_progress_d{}", new.step - old.step);
    Ok(s)
}
