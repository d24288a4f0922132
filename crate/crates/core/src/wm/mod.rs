//! Forward world models.
//!
//! A world model maps a scene state to the next one. The trainable model is a
//! shared per-particle MLP: each particle sees its own normalized features
//! concatenated with the mean over all particles, and predicts a normalized
//! residual `(Δposition, Δvelocity)`.

mod checkpoint;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};

use crate::sim::{Dynamics, Layout, SceneState, Trajectory};
use crate::{Error, Result};

pub use checkpoint::{
    decode as decode_checkpoint, encode as encode_checkpoint, load_checkpoint, save_checkpoint,
    Checkpoint,
};
pub use mlp::{param_count, Mlp, Tape};
pub(crate) use train::Moments;
pub use train::{train, Dataset, Schedule, TrainBatch, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

/// Per-particle features: position then velocity.
pub const FEATURES: usize = 6;
/// Network input: own features plus the scene mean.
pub const INPUT: usize = 2 * FEATURES;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Arch {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Start the output layer at zero, making the untrained model the identity.
    pub zero_output: bool,
}

impl Default for Arch {
    fn default() -> Self {
        Arch {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            zero_output: false,
        }
    }
}

impl Arch {
    pub fn sizes(&self, inputs: usize, outputs: usize) -> Result<Vec<usize>> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "hidden sizes must be non-empty and >= 1, got {:?}",
                self.hidden
            )));
        }
        let mut s = vec![inputs];
        s.extend(&self.hidden);
        s.push(outputs);
        Ok(s)
    }
}

/// Feature statistics of the training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: [f64; FEATURES],
    pub std: [f64; FEATURES],
    /// Root-mean-square one-step change per feature; scales the residual.
    pub delta: [f64; FEATURES],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            mean: [0.0; FEATURES],
            std: [1.0; FEATURES],
            delta: [1.0; FEATURES],
        }
    }
}

fn positive_or_one(v: f64) -> f64 {
    if v.is_finite() && v > 1e-12 {
        v
    } else {
        1.0
    }
}

impl Normalization {
    /// Sample mean/std (divisor n−1) of every particle feature over all frames,
    /// and the RMS of one-step changes.
    pub fn fit(trajs: &[Trajectory]) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0; FEATURES];
        let mut transitions = 0usize;
        let mut sq_delta = [0.0; FEATURES];
        for t in trajs {
            for (k, s) in t.states.iter().enumerate() {
                for f in s.features() {
                    count += 1;
                    for j in 0..FEATURES {
                        sum[j] += f[j];
                    }
                }
                if let Some(next) = t.states.get(k + 1) {
                    for (a, b) in s.features().zip(next.features()) {
                        transitions += 1;
                        for j in 0..FEATURES {
                            sq_delta[j] += (b[j] - a[j]).powi(2);
                        }
                    }
                }
            }
        }
        if count < 2 || transitions == 0 {
            return Err(Error::InvalidInput(
                "normalization needs at least one transition".into(),
            ));
        }
        let mean = sum.map(|s| s / count as f64);
        let mut var = [0.0; FEATURES];
        for t in trajs {
            for s in &t.states {
                for f in s.features() {
                    for j in 0..FEATURES {
                        var[j] += (f[j] - mean[j]).powi(2);
                    }
                }
            }
        }
        Ok(Normalization {
            mean,
            std: var.map(|v| positive_or_one((v / (count - 1) as f64).sqrt())),
            delta: sq_delta.map(|v| positive_or_one((v / transitions as f64).sqrt())),
        })
    }

    pub fn normalize(&self, f: &[f64; FEATURES]) -> [f64; FEATURES] {
        std::array::from_fn(|j| (f[j] - self.mean[j]) / self.std[j])
    }

    pub fn denormalize(&self, z: &[f64; FEATURES]) -> [f64; FEATURES] {
        std::array::from_fn(|j| z[j] * self.std[j] + self.mean[j])
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mean.iter().all(|v| v.is_finite())
            && self
                .std
                .iter()
                .chain(&self.delta)
                .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "normalization stds must be finite and > 0".into(),
            ))
        }
    }

    /// Network rows `[z_i, mean_j z_j]` for every particle.
    pub fn inputs(&self, state: &SceneState) -> Vec<f64> {
        let z: Vec<[f64; FEATURES]> = state.features().map(|f| self.normalize(&f)).collect();
        let n = z.len().max(1) as f64;
        let mut ctx = [0.0; FEATURES];
        for zi in &z {
            for j in 0..FEATURES {
                ctx[j] += zi[j];
            }
        }
        ctx.iter_mut().for_each(|c| *c /= n);
        let mut rows = Vec::with_capacity(z.len() * INPUT);
        for zi in &z {
            rows.extend_from_slice(zi);
            rows.extend_from_slice(&ctx);
        }
        rows
    }
}

/// Anything that predicts the next scene state.
pub trait ForwardModel: Sync {
    fn predict(&self, state: &SceneState) -> Result<SceneState>;

    /// `k` autoregressive predictions; the model's own output is fed back in.
    fn rollout(&self, state: &SceneState, k: usize) -> Result<SceneState> {
        Ok(self.rollout_all(state, k)?.pop().unwrap())
    }

    /// Every intermediate prediction of a `k`-step rollout, `[ŝ₁, …, ŝₖ]`.
    fn rollout_all(&self, state: &SceneState, k: usize) -> Result<Vec<SceneState>> {
        if k == 0 {
            return Err(Error::InvalidInput("rollout length must be >= 1".into()));
        }
        let mut out: Vec<SceneState> = Vec::with_capacity(k);
        for _ in 0..k {
            let next = self.predict(out.last().unwrap_or(state))?;
            out.push(next);
        }
        Ok(out)
    }

    /// Short identifier of the model's parameters.
    fn fingerprint(&self) -> String {
        String::from("model")
    }

    /// Mean squared error of the `k`-step rollout against `target`.
    fn loss(&self, state: &SceneState, target: &SceneState, k: usize) -> Result<f64> {
        mse(&self.rollout(state, k)?, target)
    }
}

/// Mean over all particle position and velocity components.
pub fn mse(a: &SceneState, b: &SceneState) -> Result<f64> {
    if a.object_index != b.object_index || a.positions.len() != b.positions.len() {
        return Err(Error::LayoutMismatch(
            "compared states have different particle layouts".into(),
        ));
    }
    let n = a.positions.len() * FEATURES;
    if n == 0 {
        return Err(Error::InvalidInput("empty state".into()));
    }
    let sum: f64 = a
        .features()
        .zip(b.features())
        .map(|(x, y)| x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>())
        .sum();
    Ok(sum / n as f64)
}

/// Trainable world model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct WMParams {
    pub arch: Arch,
    pub net: Mlp,
    pub norm: Normalization,
    pub train_steps: u64,
    pub seed: u64,
    adam: train::Moments,
}

pub fn init_wm(seed: u64, arch: &Arch) -> Result<WMParams> {
    let sizes = arch.sizes(INPUT, FEATURES)?;
    Ok(WMParams {
        arch: arch.clone(),
        net: Mlp::init(&sizes, seed, arch.zero_output)?,
        norm: Normalization::default(),
        train_steps: 0,
        seed,
        adam: Default::default(),
    })
}

impl WMParams {
    pub fn with_normalization(mut self, norm: Normalization) -> Result<Self> {
        norm.validate()?;
        self.norm = norm;
        Ok(self)
    }

    fn check_state(state: &SceneState) -> Result<usize> {
        state.check()?;
        match state.particle_count() {
            0 => Err(Error::InvalidInput("state has no particles".into())),
            n => Ok(n),
        }
    }
}

impl ForwardModel for WMParams {
    fn predict(&self, state: &SceneState) -> Result<SceneState> {
        let n = Self::check_state(state)?;
        let out = self.net.forward(&self.norm.inputs(state), n);
        let mut next = SceneState {
            time_index: state.time_index + 1,
            positions: Vec::with_capacity(n),
            velocities: Vec::with_capacity(n),
            object_index: state.object_index.clone(),
        };
        for (i, f) in state.features().enumerate() {
            let d = &out[i * FEATURES..(i + 1) * FEATURES];
            let x: [f64; FEATURES] = std::array::from_fn(|j| f[j] + d[j] * self.norm.delta[j]);
            next.positions.push([x[0], x[1], x[2]]);
            next.velocities.push([x[3], x[4], x[5]]);
        }
        next.check()
            .map_err(|_| Error::NonFinite("world-model prediction"))?;
        Ok(next)
    }
}

/// Ground-truth model: predicts by stepping the simulator.
#[derive(Clone, Debug)]
pub struct OracleWm {
    dynamics: Dynamics,
    dt: f64,
}

impl OracleWm {
    pub fn new(layout: &Layout, object_index: &[u32], dt: f64) -> Result<Self> {
        Ok(OracleWm {
            dynamics: Dynamics::new(layout, object_index)?,
            dt,
        })
    }

    pub fn for_trajectory(traj: &Trajectory) -> Result<Self> {
        Self::new(&traj.layout, &traj.states[0].object_index, traj.dt)
    }
}

impl ForwardModel for OracleWm {
    fn predict(&self, state: &SceneState) -> Result<SceneState> {
        self.dynamics.advance(state, self.dt)
    }

    fn fingerprint(&self) -> String {
        String::from("oracle")
    }
}
