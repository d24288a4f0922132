//! Held-out evaluation of single features and composites, per-scenario sign
//! analysis and complementarity ranking.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lasso::{lambda_grid, lasso_fit, loo_select_lambda};
use super::{mean, pearson_r, sem, RatingDataset};
use crate::rng::{derive_seed, rng};
use crate::{Error, Result};

/// Named per-stimulus columns sharing one stimulus order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub scenarios: Vec<String>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, scenarios: Vec<String>) -> Result<FeatureTable> {
        if ids.len() != scenarios.len() {
            return Err(Error::InvalidInput(
                "ids and scenarios differ in length".into(),
            ));
        }
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != ids.len() {
            return Err(Error::InvalidInput("duplicate stimulus ids".into()));
        }
        Ok(FeatureTable {
            ids,
            scenarios,
            ..Default::default()
        })
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.ids.len() {
            return Err(Error::InvalidInput(format!(
                "column `{name}` has {} values for {} stimuli",
                values.len(),
                self.ids.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature column"));
        }
        if self.names.iter().any(|n| n == name) {
            return Err(Error::InvalidInput(format!("duplicate column `{name}`")));
        }
        self.names.push(name.to_string());
        self.columns.push(values);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    fn require(&self, names: &[String]) -> Result<Vec<&[f64]>> {
        names
            .iter()
            .map(|n| {
                self.column(n)
                    .ok_or_else(|| Error::InvalidInput(format!("no column `{n}`")))
            })
            .collect()
    }

    /// Mean ratings in table order; the id sets must match exactly.
    pub fn targets(&self, ratings: &RatingDataset) -> Result<Vec<f64>> {
        if ratings.stimuli.len() != self.ids.len() {
            return Err(Error::InvalidInput(format!(
                "{} rated stimuli but {} scored stimuli",
                ratings.stimuli.len(),
                self.ids.len()
            )));
        }
        self.ids
            .iter()
            .map(|id| {
                ratings
                    .get(id)
                    .map(|s| s.mean())
                    .ok_or_else(|| Error::InvalidInput(format!("stimulus `{id}` has no ratings")))
            })
            .collect()
    }
}

/// Train/test memberships shared by every model in one report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub seed: u64,
    pub train_frac: f64,
    /// `(train, test)` row indices, each sorted.
    pub splits: Vec<(Vec<usize>, Vec<usize>)>,
}

impl Splits {
    pub fn new(n: usize, n_splits: usize, train_frac: f64, seed: u64) -> Result<Splits> {
        if n_splits == 0 || !(train_frac > 0.0 && train_frac < 1.0) {
            return Err(Error::Config(
                "need n_splits >= 1 and train_frac in (0, 1)".into(),
            ));
        }
        let n_train = (train_frac * n as f64).round() as usize;
        if n_train < 3 || n.saturating_sub(n_train) < 3 {
            return Err(Error::InvalidInput(format!(
                "{n} stimuli cannot be split into >= 3 train and >= 3 test"
            )));
        }
        let splits = (0..n_splits)
            .map(|s| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng(derive_seed(seed, s as u64)));
                let (train, test) = idx.split_at(n_train);
                let (mut train, mut test) = (train.to_vec(), test.to_vec());
                train.sort_unstable();
                test.sort_unstable();
                (train, test)
            })
            .collect();
        Ok(Splits {
            seed,
            train_frac,
            splits,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    /// Plain least squares on the listed features.
    Ols(Vec<String>),
    /// Lasso with λ chosen by leave-one-out over a grid built on each
    /// training split.
    Lasso {
        features: Vec<String>,
        grid_size: usize,
        grid_ratio: f64,
    },
}

impl ModelSpec {
    pub fn single(name: &str) -> ModelSpec {
        ModelSpec::Ols(vec![name.to_string()])
    }

    fn features(&self) -> &[String] {
        match self {
            ModelSpec::Ols(f) => f,
            ModelSpec::Lasso { features, .. } => features,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub name: String,
    /// Held-out r per split.
    pub per_split: Vec<f64>,
    pub mean: f64,
    /// Standard error of the per-split r.
    pub se: f64,
    /// r over all held-out predictions of all splits together.
    pub pooled: f64,
    /// λ used on each split.
    pub lambdas: Vec<f64>,
    /// Splits whose lasso fit kept no feature; their r is taken as 0.
    pub intercept_only: usize,
}

/// Fits `spec` on each training split and correlates its predictions with
/// `y` on the held-out stimuli.
pub fn evaluate_splits(
    name: &str,
    table: &FeatureTable,
    y: &[f64],
    spec: &ModelSpec,
    splits: &Splits,
) -> Result<SplitScore> {
    if y.len() != table.ids.len() {
        return Err(Error::InvalidInput(
            "targets do not match the feature table".into(),
        ));
    }
    let names = spec.features();
    if names.is_empty() {
        return Err(Error::InvalidInput("model has no features".into()));
    }
    let cols = table.require(names)?;
    let row = |i: usize| cols.iter().map(|c| c[i]).collect::<Vec<f64>>();

    let results: Vec<(Vec<f64>, f64, bool)> = splits
        .splits
        .par_iter()
        .map(|(train, test)| -> Result<_> {
            if test.len() < 3 {
                return Err(Error::InvalidInput(
                    "test split has fewer than 3 stimuli".into(),
                ));
            }
            let x: Vec<Vec<f64>> = train.iter().map(|&i| row(i)).collect();
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let lambda = match spec {
                ModelSpec::Ols(_) => 0.0,
                ModelSpec::Lasso {
                    grid_size,
                    grid_ratio,
                    ..
                } => loo_select_lambda(&x, &yt, &lambda_grid(&x, &yt, *grid_size, *grid_ratio)?)?,
            };
            let model = lasso_fit(names, &x, &yt, lambda)?;
            let empty = matches!(spec, ModelSpec::Lasso { .. }) && model.nonzero() == 0;
            Ok((
                test.iter().map(|&i| model.predict(&row(i))).collect(),
                lambda,
                empty,
            ))
        })
        .collect::<Result<_>>()?;

    let mut per_split = Vec::with_capacity(results.len());
    let (mut all_pred, mut all_y) = (Vec::new(), Vec::new());
    for ((_, test), (pred, _, empty)) in splits.splits.iter().zip(&results) {
        let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        all_pred.extend_from_slice(pred);
        all_y.extend_from_slice(&truth);
        if *empty {
            per_split.push(0.0);
            continue;
        }
        per_split.push(pearson_r(pred, &truth).map_err(|e| match e {
            Error::Degenerate(_) => {
                Error::Degenerate(format!("`{name}` predicts a constant on a split"))
            }
            e => e,
        })?);
    }
    let intercept_only = results.iter().filter(|r| r.2).count();
    if intercept_only > 0 {
        log::warn!("`{name}` kept no feature on {intercept_only} split(s)");
    }
    // Intercept-only splits predict different constants, so the pooled r
    // stays defined unless every split is empty.
    let pooled = if intercept_only == results.len() {
        0.0
    } else {
        pearson_r(&all_pred, &all_y)?
    };
    Ok(SplitScore {
        name: name.to_string(),
        mean: mean(&per_split),
        se: sem(&per_split),
        pooled,
        per_split,
        lambdas: results.iter().map(|r| r.1).collect(),
        intercept_only,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignFlag {
    Consistent,
    Mixed,
    /// Every cell was degenerate.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMatrix {
    pub scenarios: Vec<String>,
    pub features: Vec<String>,
    /// `cells[scenario][feature]`; `None` where the feature is constant.
    pub cells: Vec<Vec<Option<f64>>>,
    pub flags: Vec<SignFlag>,
}

/// Within-scenario correlation of each feature with `y`.
pub fn per_scenario_matrix(
    table: &FeatureTable,
    y: &[f64],
    features: &[String],
) -> Result<ScenarioMatrix> {
    if y.len() != table.ids.len() {
        return Err(Error::InvalidInput(
            "targets do not match the feature table".into(),
        ));
    }
    let cols = table.require(features)?;
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in table.scenarios.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let mut cells = Vec::with_capacity(groups.len());
    for (scenario, idx) in &groups {
        if idx.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "scenario `{scenario}` has fewer than 3 stimuli"
            )));
        }
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let row = cols
            .iter()
            .map(|c| {
                let xs: Vec<f64> = idx.iter().map(|&i| c[i]).collect();
                match pearson_r(&xs, &ys) {
                    Ok(r) => Ok(Some(r)),
                    Err(Error::Degenerate(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    let flags = (0..features.len())
        .map(|j| {
            let signs: Vec<bool> = cells
                .iter()
                .filter_map(|row: &Vec<Option<f64>>| row[j])
                .filter(|r| *r != 0.0)
                .map(|r| r > 0.0)
                .collect();
            match signs.first() {
                None => SignFlag::Degenerate,
                Some(&s) if signs.iter().all(|&t| t == s) => SignFlag::Consistent,
                Some(_) => SignFlag::Mixed,
            }
        })
        .collect();
    Ok(ScenarioMatrix {
        scenarios: groups.keys().map(|s| s.to_string()).collect(),
        features: features.to_vec(),
        cells,
        flags,
    })
}

/// Ranks each candidate by the held-out r of the two-feature model
/// `{base, candidate}`; best first, ties by name.
pub fn complementarity(
    base: &str,
    candidates: &[String],
    table: &FeatureTable,
    y: &[f64],
    splits: &Splits,
) -> Result<Vec<SplitScore>> {
    if table.column(base).is_none() {
        return Err(Error::InvalidInput(format!("no column `{base}`")));
    }
    let mut scores = candidates
        .iter()
        .filter(|c| c.as_str() != base)
        .map(|c| {
            let spec = ModelSpec::Ols(vec![base.to_string(), c.clone()]);
            evaluate_splits(c, table, y, &spec, splits)
        })
        .collect::<Result<Vec<_>>>()?;
    scores.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.name.cmp(&b.name)));
    Ok(scores)
}
