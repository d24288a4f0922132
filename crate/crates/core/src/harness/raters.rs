//! Synthetic raters standing in for the human experiment, and ratings I/O.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, rng, tag};
use crate::stats::{mean, parse_ratings, std_dev, FeatureTable, RatingDataset, StimulusRatings};
use crate::{Error, Result};

/// How a driver column becomes a latent contribution before z-scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    #[default]
    Linear,
    /// Average ranks: spreads heavy-tailed drivers such as total IR evenly,
    /// so stimuli within one scenario still differ.
    Rank,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Driver {
    pub feature: String,
    pub weight: f64,
    #[serde(default)]
    pub transform: Transform,
    /// Scenarios in which the driver enters with the opposite sign.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flip_scenarios: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticRaterModel {
    pub raters: usize,
    /// Standard deviation of each rater's latent noise.
    pub noise: f64,
    /// Latent cut points between responses 1|2, 2|3, 3|4, 4|5.
    pub thresholds: Vec<f64>,
    pub drivers: Vec<Driver>,
    /// Drop raters who never used both ends of the scale.
    pub exclusions: bool,
    pub seed: u64,
}

impl Default for SyntheticRaterModel {
    fn default() -> Self {
        SyntheticRaterModel {
            raters: 32,
            noise: 1.2,
            thresholds: vec![-1.5, -0.5, 0.5, 1.5],
            drivers: vec![Driver {
                feature: "adversarial".into(),
                weight: 1.0,
                transform: Transform::Linear,
                flip_scenarios: vec![],
            }],
            exclusions: false,
            seed: 0,
        }
    }
}

impl SyntheticRaterModel {
    pub fn validate(&self) -> Result<()> {
        if self.raters < 2 {
            return Err(Error::Config("raters.raters must be >= 2".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config("raters.noise must be finite and >= 0".into()));
        }
        if self.thresholds.len() != 4
            || self.thresholds.iter().any(|t| !t.is_finite())
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(
                "raters.thresholds must be 4 strictly increasing finite values".into(),
            ));
        }
        if self.drivers.iter().any(|d| !d.weight.is_finite()) {
            return Err(Error::Config(
                "raters.drivers weights must be finite".into(),
            ));
        }
        Ok(())
    }

    fn discretize(&self, latent: f64) -> u8 {
        1 + self.thresholds.iter().filter(|t| latent > **t).count() as u8
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        for &o in &order[i..=j] {
            out[o] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    out
}

/// Latent score = Σ weight · (±) z(transform(driver)) + rater noise, cut into
/// 1..5. Drivers are z-scored over all stimuli of `table`.
pub fn generate_synthetic_ratings(
    model: &SyntheticRaterModel,
    table: &FeatureTable,
    seed: u64,
) -> Result<RatingDataset> {
    model.validate()?;
    let mut latent = vec![0.0; table.ids.len()];
    for d in &model.drivers {
        let col = table.column(&d.feature).ok_or_else(|| {
            Error::InvalidInput(format!("driver feature `{}` not in table", d.feature))
        })?;
        let col = match d.transform {
            Transform::Linear => col.to_vec(),
            Transform::Rank => ranks(col),
        };
        let (m, s) = (mean(&col), std_dev(&col));
        if !(s > 0.0) {
            return Err(Error::Degenerate(format!(
                "driver `{}` is constant",
                d.feature
            )));
        }
        for ((l, v), scenario) in latent.iter_mut().zip(&col).zip(&table.scenarios) {
            let sign = if d.flip_scenarios.contains(scenario) {
                -1.0
            } else {
                1.0
            };
            *l += d.weight * sign * (v - m) / s;
        }
    }
    let rater_ids: Vec<String> = (0..model.raters).map(|r| format!("r{r:03}")).collect();
    let mut stimuli: Vec<StimulusRatings> = table
        .ids
        .iter()
        .zip(&table.scenarios)
        .zip(&latent)
        .map(|((id, scenario), l)| {
            // One stream per stimulus, so responses do not depend on table order.
            let mut r = rng(derive_seed(seed, tag(id)));
            let responses = rater_ids
                .iter()
                .map(|rid| {
                    let e: f64 = StandardNormal.sample(&mut r);
                    (rid.clone(), model.discretize(l + model.noise * e))
                })
                .collect();
            StimulusRatings {
                stimulus_id: id.clone(),
                scenario: scenario.clone(),
                responses,
            }
        })
        .collect();
    if model.exclusions {
        let mut ends: BTreeMap<&str, (bool, bool)> = BTreeMap::new();
        for s in &stimuli {
            for (rid, v) in &s.responses {
                let e = ends.entry(rid).or_default();
                e.0 |= *v == 1;
                e.1 |= *v == 5;
            }
        }
        let keep: BTreeSet<String> = ends
            .into_iter()
            .filter(|(_, (lo, hi))| *lo && *hi)
            .map(|(r, _)| r.to_string())
            .collect();
        log::info!("exclusions keep {} of {} raters", keep.len(), model.raters);
        for s in &mut stimuli {
            s.responses.retain(|(rid, _)| keep.contains(rid));
        }
        if keep.len() < 2 {
            return Err(Error::Degenerate(
                "fewer than 2 raters survive exclusions".into(),
            ));
        }
    }
    RatingDataset::new(stimuli)
}

/// Reads and validates a ratings CSV.
pub fn ingest_ratings(path: &Path) -> Result<RatingDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ratings(&text, &path.display().to_string())
}

pub fn write_ratings(path: &Path, data: &RatingDataset) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, data.to_csv()).map_err(|e| Error::io(path, e))
}
