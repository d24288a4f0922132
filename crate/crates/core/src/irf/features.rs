//! Simple scene features: trajectory statistics that need no world model.

use std::collections::{BTreeMap, BTreeSet};

use crate::sim::math::Vec3;
use crate::sim::{Dynamics, Trajectory};
use crate::{Error, Result};

/// Default contact distance used to decide when initial contacts separate.
pub const DEFAULT_CONTACT_THRESHOLD: f64 = 0.005;

/// Feature names in catalog order.
pub const CATALOG: [&str; 27] = [
    "position_mean",
    "position_variance",
    "position_min",
    "position_max",
    "velocity_mean",
    "velocity_variance",
    "velocity_min",
    "velocity_max",
    "speed_mean",
    "speed_max",
    "height_mean",
    "position_cov_trace_initial",
    "position_cov_trace_mean",
    "position_cov_trace_min",
    "position_cov_trace_max",
    "velocity_cov_trace_initial",
    "velocity_cov_trace_mean",
    "velocity_cov_trace_min",
    "velocity_cov_trace_max",
    "collision_total",
    "collision_initial",
    "collision_mean",
    "collision_min",
    "collision_max",
    "n_objects",
    "n_categories",
    "n_distractors",
];

/// Catalog values, one per entry of [`CATALOG`].
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        CATALOG
            .iter()
            .position(|&n| n == name)
            .map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        CATALOG.iter().copied().zip(self.values.iter().copied())
    }
}

/// Running mean / sample variance (Welford) / min / max.
#[derive(Default)]
struct Summary {
    n: usize,
    mean: f64,
    m2: f64,
    min: f64,
    max: f64,
}

impl Summary {
    fn push(&mut self, v: f64) {
        if self.n == 0 {
            self.min = v;
            self.max = v;
        }
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Trace of the sample covariance (divisor n−1) of a set of 3-vectors.
pub fn covariance_trace(points: &[Vec3]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut trace = 0.0;
    for axis in 0..3 {
        let mean = points.iter().map(|p| p[axis]).sum::<f64>() / n as f64;
        trace += points.iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    trace
}

fn frame_summary(traces: &[f64]) -> [f64; 4] {
    let mut s = Summary::default();
    traces.iter().for_each(|&t| s.push(t));
    [traces[0], s.mean(), s.min, s.max]
}

pub fn scene_features(traj: &Trajectory, bins: usize) -> Result<FeatureVector> {
    scene_features_with(traj, bins, DEFAULT_CONTACT_THRESHOLD)
}

pub fn scene_features_with(
    traj: &Trajectory,
    bins: usize,
    threshold: f64,
) -> Result<FeatureVector> {
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be >= 1".into()));
    }
    if traj.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let t_len = traj.len();
    let mut pos = Summary::default();
    let mut vel = Summary::default();
    let mut speed = Summary::default();
    let mut height = Summary::default();
    for s in &traj.states {
        for (p, v) in s.positions.iter().zip(&s.velocities) {
            p.iter().for_each(|&x| pos.push(x));
            v.iter().for_each(|&x| vel.push(x));
            speed.push((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt());
            height.push(p[1]);
        }
    }

    // Object centroids per frame, in object-id order.
    let ids: BTreeSet<u32> = traj.states[0].object_index.iter().copied().collect();
    let slot: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut pos_traces = Vec::with_capacity(t_len);
    let mut vel_traces = Vec::with_capacity(t_len);
    for s in &traj.states {
        let mut cp = vec![[0.0; 3]; ids.len()];
        let mut cv = vec![[0.0; 3]; ids.len()];
        let mut count = vec![0usize; ids.len()];
        for ((p, v), id) in s.positions.iter().zip(&s.velocities).zip(&s.object_index) {
            let k = slot[id];
            count[k] += 1;
            for a in 0..3 {
                cp[k][a] += p[a];
                cv[k][a] += v[a];
            }
        }
        for k in 0..ids.len() {
            let c = count[k] as f64;
            cp[k] = cp[k].map(|x| x / c);
            cv[k] = cv[k].map(|x| x / c);
        }
        pos_traces.push(covariance_trace(&cp));
        vel_traces.push(covariance_trace(&cv));
    }

    // Collision onsets after the first frame, per equal temporal bin.
    let mut per_bin = vec![0.0; bins];
    let mut total = 0.0;
    for e in traj.collisions.iter().filter(|e| e.time_index >= 1) {
        per_bin[(e.time_index * bins / t_len).min(bins - 1)] += 1.0;
        total += 1.0;
    }
    let mut bin_summary = Summary::default();
    per_bin.iter().for_each(|&c| bin_summary.push(c));

    // Initial contacts that have separated by the end of the first bin.
    let first_bin_end = t_len.div_ceil(bins);
    let dynamics = Dynamics::new(&traj.layout, &traj.states[0].object_index)?;
    let initial: BTreeSet<_> = dynamics
        .detect(&traj.states[0], threshold)
        .into_iter()
        .map(|e| (e.object_a, e.object_b))
        .collect();
    let mut separated = BTreeSet::new();
    for s in traj.states.iter().take(first_bin_end).skip(1) {
        let now: BTreeSet<_> = dynamics
            .detect(s, threshold)
            .into_iter()
            .map(|e| (e.object_a, e.object_b))
            .collect();
        separated.extend(initial.difference(&now).copied());
    }

    let objects = &traj.layout.objects;
    let categories: BTreeSet<_> = objects.iter().map(|o| o.category).collect();
    let [pi, pm, pmin, pmax] = frame_summary(&pos_traces);
    let [vi, vm, vmin, vmax] = frame_summary(&vel_traces);
    let values = vec![
        pos.mean(),
        pos.variance(),
        pos.min,
        pos.max,
        vel.mean(),
        vel.variance(),
        vel.min,
        vel.max,
        speed.mean(),
        speed.max,
        height.mean(),
        pi,
        pm,
        pmin,
        pmax,
        vi,
        vm,
        vmin,
        vmax,
        total,
        separated.len() as f64,
        total / bins as f64,
        bin_summary.min,
        bin_summary.max,
        objects.len() as f64,
        categories.len() as f64,
        objects.iter().filter(|o| o.is_distractor).count() as f64,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scene features"));
    }
    Ok(FeatureVector { values })
}
