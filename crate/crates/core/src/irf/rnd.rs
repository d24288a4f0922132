//! Random network distillation.
//!
//! Both networks embed a scene as the mean over particles of a per-particle
//! MLP applied to the same `[z_i, mean z]` rows the world model consumes.

use super::RewardSeries;
use crate::sim::{SceneState, Trajectory};
use crate::wm::{Mlp, Moments, Normalization, INPUT};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RndPair {
    /// Frozen after construction.
    pub target: Mlp,
    pub predictor: Mlp,
    pub norm: Normalization,
    pub embed_dim: usize,
    pub train_steps: u64,
    adam: Moments,
}

pub fn rnd_init(
    seed_target: u64,
    seed_predictor: u64,
    embed_dim: usize,
    hidden: &[usize],
    norm: Normalization,
) -> Result<RndPair> {
    if seed_target == seed_predictor {
        return Err(Error::InvalidInput(
            "target and predictor seeds must differ".into(),
        ));
    }
    if embed_dim == 0 {
        return Err(Error::InvalidInput("embed_dim must be >= 1".into()));
    }
    let mut sizes = vec![INPUT];
    sizes.extend(hidden);
    sizes.push(embed_dim);
    RndPair::from_parts(
        Mlp::init(&sizes, seed_target, false)?,
        Mlp::init(&sizes, seed_predictor, false)?,
        norm,
    )
}

impl RndPair {
    pub fn from_parts(target: Mlp, predictor: Mlp, norm: Normalization) -> Result<Self> {
        if target.sizes() != predictor.sizes() || target.input_size() != INPUT {
            return Err(Error::InvalidInput(
                "target and predictor architectures differ".into(),
            ));
        }
        norm.validate()?;
        Ok(RndPair {
            embed_dim: target.output_size(),
            target,
            predictor,
            norm,
            train_steps: 0,
            adam: Default::default(),
        })
    }

    pub fn embed(&self, net: &Mlp, state: &SceneState) -> Result<Vec<f64>> {
        state.check()?;
        let n = state.particle_count();
        if n == 0 {
            return Err(Error::InvalidInput("state has no particles".into()));
        }
        let out = net.forward(&self.norm.inputs(state), n);
        let mut e = vec![0.0; self.embed_dim];
        for row in out.chunks_exact(self.embed_dim) {
            e.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        e.iter_mut().for_each(|a| *a /= n as f64);
        Ok(e)
    }

    /// Root-mean-square difference between the two embeddings of `state`.
    pub fn error(&self, state: &SceneState) -> Result<f64> {
        let t = self.embed(&self.target, state)?;
        let p = self.embed(&self.predictor, state)?;
        let ms =
            t.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / self.embed_dim as f64;
        Ok(ms.sqrt())
    }

    /// Mean RMSE over `states` and its gradient with respect to the predictor.
    pub fn loss_and_grad(&self, states: &[&SceneState]) -> Result<(f64, Vec<f64>)> {
        if states.is_empty() {
            return Err(Error::InvalidInput("empty RND batch".into()));
        }
        let d = self.embed_dim as f64;
        let mut grad = vec![0.0; self.predictor.params.len()];
        let mut loss = 0.0;
        for s in states {
            let n = s.particle_count();
            let target = self.embed(&self.target, s)?;
            let tape = self.predictor.forward_tape(self.norm.inputs(s), n);
            let mut pred = vec![0.0; self.embed_dim];
            for row in tape.output().chunks_exact(self.embed_dim) {
                pred.iter_mut()
                    .zip(row)
                    .for_each(|(a, b)| *a += b / n as f64);
            }
            let diff: Vec<f64> = pred.iter().zip(&target).map(|(p, t)| p - t).collect();
            let rmse = (diff.iter().map(|x| x * x).sum::<f64>() / d).sqrt();
            loss += rmse / states.len() as f64;
            if rmse == 0.0 {
                continue;
            }
            // d rmse / d pred_j = diff_j / (D · rmse); the mean pool spreads it over rows.
            let scale = 1.0 / (d * rmse * n as f64 * states.len() as f64);
            let row: Vec<f64> = diff.iter().map(|x| x * scale).collect();
            let delta: Vec<f64> = (0..n).flat_map(|_| row.iter().copied()).collect();
            self.predictor.backward(&tape, delta, &mut grad);
        }
        Ok((loss, grad))
    }

    pub fn train_step(&mut self, states: &[&SceneState], lr: f64) -> Result<f64> {
        let (loss, grad) = self.loss_and_grad(states)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("RND gradient"));
        }
        self.adam.update(&mut self.predictor.params, &grad, lr);
        self.train_steps += 1;
        Ok(loss)
    }
}

/// Trains the predictor toward the target embeddings of the training states,
/// cycling through them in fixed strided batches.
pub fn rnd_train(
    pair: &mut RndPair,
    trajs: &[Trajectory],
    steps: u64,
    lr: f64,
    batch_size: usize,
) -> Result<()> {
    let states: Vec<&SceneState> = trajs.iter().flat_map(|t| &t.states).collect();
    if states.is_empty() {
        return Err(Error::InvalidInput("RND training set is empty".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    // Deterministic coverage: a stride coprime with the state count visits every state.
    let n = states.len();
    let stride = (1..)
        .map(|k| n / 2 + k)
        .find(|s| gcd(*s, n) == 1)
        .unwrap_or(1);
    let mut cursor = 0usize;
    for _ in 0..steps {
        let batch: Vec<&SceneState> = (0..batch_size)
            .map(|_| {
                cursor = (cursor + stride) % n;
                states[cursor]
            })
            .collect();
        pair.train_step(&batch, lr)?;
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Per-frame RMSE over all `T` states.
pub fn rnd_reward(pair: &RndPair, traj: &Trajectory, id: &str) -> Result<RewardSeries> {
    let per_step = traj
        .states
        .iter()
        .map(|s| pair.error(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(RewardSeries::new(
        id,
        "rnd",
        per_step,
        format!("rnd@{}", pair.train_steps),
    ))
}
