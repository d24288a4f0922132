//! Total IR for every (trajectory, IRF, checkpoint step, k).

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::features::scene_features;
use super::rewards::{disagreement_from, Rollouts};
use super::rnd::RndPair;
use super::table::{IrRow, IrTable, StimulusInfo};
use crate::sim::Trajectory;
use crate::wm::{Checkpoint, ForwardModel, OracleWm};
use crate::{Error, Result};

/// One ensemble member at one training step.
#[derive(Clone, Copy, Debug)]
pub enum Member<'a> {
    Trained(&'a Checkpoint),
    /// The simulator itself, built per trajectory.
    Oracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Checkpoint steps reported for adversarial and disagreement.
    pub steps: Vec<u64>,
    pub ks: Vec<usize>,
    pub deltas: Vec<u64>,
    pub bins: usize,
}

pub fn delta_irf_name(delta: u64) -> String {
    format!("delta_progress_d{delta}")
}

enum Model<'a> {
    Trained(&'a Checkpoint),
    Oracle(OracleWm),
}

impl Model<'_> {
    fn get(&self) -> &dyn ForwardModel {
        match self {
            Model::Trained(c) => *c,
            Model::Oracle(o) => o,
        }
    }
}

fn build<'a>(m: Member<'a>, traj: &Trajectory) -> Result<Model<'a>> {
    Ok(match m {
        Member::Trained(c) => Model::Trained(c),
        Member::Oracle => Model::Oracle(OracleWm::for_trajectory(traj)?),
    })
}

/// `ensemble[0]` is the primary model used for adversarial and δ-progress;
/// all members together give disagreement (when there are at least two).
pub fn sweep(
    trajs: &[(String, &Trajectory)],
    ensemble: &[BTreeMap<u64, Member>],
    rnd: Option<&RndPair>,
    spec: &SweepSpec,
) -> Result<IrTable> {
    if spec.steps.is_empty() || spec.ks.is_empty() || ensemble.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    if spec.ks.contains(&0) {
        return Err(Error::Config("rollout lengths must be >= 1".into()));
    }
    let max_step = *spec.steps.iter().max().unwrap();
    for &d in &spec.deltas {
        if d == 0 || d > max_step {
            return Err(Error::Config(format!("δ = {d} must lie in 1..={max_step}")));
        }
    }
    let primary_steps: BTreeSet<u64> = spec
        .steps
        .iter()
        .copied()
        .chain(spec.deltas.iter().flat_map(|&d| {
            spec.steps
                .iter()
                .filter(move |&&s| s >= d)
                .map(move |&s| s - d)
        }))
        .collect();
    for s in &primary_steps {
        if !ensemble[0].contains_key(s) {
            return Err(Error::Config(format!("no checkpoint at step {s}")));
        }
    }
    for member in &ensemble[1..] {
        for s in &spec.steps {
            if !member.contains_key(s) {
                return Err(Error::Config(format!("ensemble member lacks step {s}")));
            }
        }
    }
    let kmax = *spec.ks.iter().max().unwrap();

    let per_traj: Vec<(StimulusInfo, Vec<IrRow>)> = trajs
        .par_iter()
        .map(|(id, traj)| -> Result<_> {
            let features = scene_features(traj, spec.bins)?;
            let mut rows = Vec::new();
            let mut push = |irf: &str, step: u64, k: usize, total: f64| {
                rows.push(IrRow {
                    trajectory_id: id.clone(),
                    irf: irf.to_string(),
                    ckpt_step: step,
                    k,
                    total_ir: total,
                });
            };

            // Primary-model losses at every needed step.
            let mut losses: BTreeMap<(u64, usize), Vec<f64>> = BTreeMap::new();
            let mut disagreement: BTreeMap<(u64, usize), f64> = BTreeMap::new();
            for &step in &primary_steps {
                let model = build(ensemble[0][&step], traj)?;
                let primary = Rollouts::compute(model.get(), traj, kmax)?;
                for &k in &spec.ks {
                    losses.insert((step, k), primary.losses(traj, k)?);
                }
                if ensemble.len() >= 2 && spec.steps.contains(&step) {
                    let others = ensemble[1..]
                        .iter()
                        .map(|m| Rollouts::compute(build(m[&step], traj)?.get(), traj, kmax))
                        .collect::<Result<Vec<_>>>()?;
                    let all: Vec<&Rollouts> = std::iter::once(&primary).chain(&others).collect();
                    for &k in &spec.ks {
                        disagreement.insert((step, k), disagreement_from(&all, k)?.iter().sum());
                    }
                }
            }

            for &step in &spec.steps {
                for &k in &spec.ks {
                    push("adversarial", step, k, losses[&(step, k)].iter().sum());
                }
            }
            for &step in &spec.steps {
                for &k in &spec.ks {
                    if let Some(&d) = disagreement.get(&(step, k)) {
                        push("disagreement", step, k, d);
                    }
                }
            }
            for &d in &spec.deltas {
                let name = delta_irf_name(d);
                for &step in spec.steps.iter().filter(|&&s| s >= d) {
                    for &k in &spec.ks {
                        let old = &losses[&(step - d, k)];
                        let new = &losses[&(step, k)];
                        push(
                            &name,
                            step,
                            k,
                            old.iter().zip(new).map(|(a, b)| a - b).sum(),
                        );
                    }
                }
            }
            if let Some(pair) = rnd {
                let total = traj
                    .states
                    .iter()
                    .map(|s| pair.error(s))
                    .sum::<Result<f64>>()?;
                push("rnd", pair.train_steps, 0, total);
            }
            let info = StimulusInfo {
                trajectory_id: id.clone(),
                scenario: traj.scenario,
                features,
            };
            Ok((info, rows))
        })
        .collect::<Result<_>>()?;

    let mut table = IrTable::default();
    for (info, rows) in per_traj {
        table.stimuli.push(info);
        table.rows.extend(rows);
    }
    Ok(table)
}
