use rand::seq::SliceRandom;

use super::{Checkpoint, WMParams, FEATURES};
use crate::rng::{derive_seed, rng, tag};
use crate::sim::{SceneState, Trajectory};
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam first and second moments; empty until the first update.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Moments {
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        if self.m.len() != grad.len() {
            *self = Moments {
                m: vec![0.0; grad.len()],
                v: vec![0.0; grad.len()],
                t: 0,
            };
        }
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Input/target state pairs for one update.
#[derive(Clone, Debug)]
pub struct TrainBatch<'a> {
    pairs: Vec<(&'a SceneState, &'a SceneState)>,
}

impl<'a> TrainBatch<'a> {
    pub fn new(pairs: Vec<(&'a SceneState, &'a SceneState)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidInput("empty training batch".into()));
        }
        for (s, t) in &pairs {
            s.check()?;
            t.check()?;
            if s.object_index != t.object_index || s.positions.is_empty() {
                return Err(Error::LayoutMismatch(
                    "batch input and target layouts differ".into(),
                ));
            }
        }
        Ok(TrainBatch { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// All one-step transitions of a set of trajectories.
pub struct Dataset<'a> {
    trajs: &'a [Trajectory],
    pairs: Vec<(usize, usize)>,
}

impl<'a> Dataset<'a> {
    pub fn new(trajs: &'a [Trajectory]) -> Self {
        let pairs = trajs
            .iter()
            .enumerate()
            .flat_map(|(i, t)| (0..t.len().saturating_sub(1)).map(move |k| (i, k)))
            .collect();
        Dataset { trajs, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<TrainBatch<'a>> {
        TrainBatch::new(
            indices
                .iter()
                .map(|&i| {
                    let (t, k) = self.pairs[i];
                    (&self.trajs[t].states[k], &self.trajs[t].states[k + 1])
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    /// Training steps at which to save a checkpoint, strictly ascending.
    pub checkpoints: Vec<u64>,
    pub lr: f64,
    pub batch_size: usize,
}

impl WMParams {
    /// Training objective: MSE between predicted and true normalized residuals.
    /// Returns the loss and its gradient with respect to `net.params`.
    pub fn loss_and_grad(&self, batch: &TrainBatch) -> Result<(f64, Vec<f64>)> {
        let total: usize = batch
            .pairs
            .iter()
            .map(|(s, _)| s.particle_count() * FEATURES)
            .sum();
        let scale = 1.0 / total as f64;
        let mut grad = vec![0.0; self.net.params.len()];
        let mut loss = 0.0;
        for (s, t) in &batch.pairs {
            let n = s.particle_count();
            let tape = self.net.forward_tape(self.norm.inputs(s), n);
            let mut delta = Vec::with_capacity(n * FEATURES);
            for ((a, b), out) in s
                .features()
                .zip(t.features())
                .zip(tape.output().chunks_exact(FEATURES))
            {
                for j in 0..FEATURES {
                    let diff = out[j] - (b[j] - a[j]) / self.norm.delta[j];
                    loss += diff * diff * scale;
                    delta.push(2.0 * diff * scale);
                }
            }
            self.net.backward(&tape, delta, &mut grad);
        }
        Ok((loss, grad))
    }

    /// One Adam update. Returns the batch loss before the update.
    pub fn train_step(&mut self, batch: &TrainBatch, lr: f64) -> Result<f64> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be >= 0, got {lr}"
            )));
        }
        let (loss, grad) = self.loss_and_grad(batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("world-model gradient"));
        }
        self.adam.update(&mut self.net.params, &grad, lr);
        self.train_steps += 1;
        Ok(loss)
    }
}

/// Trains on shuffled mini-batches, saving a checkpoint at every scheduled step.
pub fn train(wm: &mut WMParams, data: &Dataset, schedule: &Schedule) -> Result<Vec<Checkpoint>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training dataset is empty".into()));
    }
    if schedule.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "checkpoint steps must be strictly ascending".into(),
        ));
    }
    if schedule
        .checkpoints
        .first()
        .is_some_and(|&s| s < wm.train_steps)
    {
        return Err(Error::Config(
            "checkpoint step precedes the model's current step".into(),
        ));
    }
    if schedule.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut r = rng(derive_seed(wm.seed, tag("shuffle")));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut out = Vec::with_capacity(schedule.checkpoints.len());
    for &target in &schedule.checkpoints {
        while wm.train_steps < target {
            let mut idx = Vec::with_capacity(schedule.batch_size);
            while idx.len() < schedule.batch_size.min(order.len()) {
                if cursor == order.len() {
                    order.shuffle(&mut r);
                    cursor = 0;
                }
                idx.push(order[cursor]);
                cursor += 1;
            }
            let loss = wm.train_step(&data.batch(&idx)?, schedule.lr)?;
            if wm.train_steps.is_multiple_of(1000) {
                log::debug!("seed {} step {} loss {loss:.6}", wm.seed, wm.train_steps);
            }
        }
        out.push(Checkpoint::snapshot(wm));
    }
    Ok(out)
}
