//! From an IR table and ratings to the evaluation report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::FitConfig;
use crate::irf::{delta_irf_name, IrTable, CATALOG};
use crate::stats::{
    complementarity, evaluate_splits, per_scenario_matrix, split_half_reliability, FeatureTable,
    ModelSpec, RatingDataset, Reliability, ScenarioMatrix, SplitScore, Splits,
};
use crate::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

/// World-model IRF families in report order.
pub const WM_IRFS: [&str; 4] = ["adversarial", "disagreement", "delta_progress", "rnd"];

/// Full column name of one IR table column.
pub fn column_name(irf: &str, step: u64, k: usize) -> String {
    format!("{irf}@{step}/k{k}")
}

/// Which columns the short IRF names refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct Aliases {
    pub final_step: u64,
    pub k: usize,
    pub delta: Option<u64>,
}

impl Aliases {
    /// Final checkpoint and shortest horizon found in the table.
    pub fn for_table(table: &IrTable) -> Result<Aliases> {
        let adv = table.rows.iter().filter(|r| r.irf == "adversarial");
        let final_step = adv.clone().map(|r| r.ckpt_step).max();
        let k = adv.map(|r| r.k).min();
        match (final_step, k) {
            (Some(final_step), Some(k)) => Ok(Aliases {
                final_step,
                k,
                delta: None,
            }),
            _ => Err(Error::InvalidInput(
                "IR table has no adversarial rows".into(),
            )),
        }
    }
}

/// Per-stimulus design for `ids`: every IR column under its full name, the
/// short IRF aliases and the scene features.
pub fn design(table: &IrTable, ids: &[String], aliases: &Aliases) -> Result<FeatureTable> {
    let mut scenarios = Vec::with_capacity(ids.len());
    for id in ids {
        let info = table.stimulus(id).ok_or_else(|| {
            Error::InvalidInput(format!("stimulus `{id}` is not in the IR table"))
        })?;
        scenarios.push(info.scenario.as_str().to_string());
    }
    let mut out = FeatureTable::new(ids.to_vec(), scenarios)?;
    let mut full: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (irf, step, k) in table.columns() {
        let col = table.column(&irf, step, k);
        let values = ids
            .iter()
            .map(|id| {
                col.get(id.as_str()).copied().ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "stimulus `{id}` lacks {}",
                        column_name(&irf, step, k)
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        full.insert(column_name(&irf, step, k), values);
    }
    let short = |irf: &str| -> Option<String> {
        let (s, k) = (aliases.final_step, aliases.k);
        match irf {
            "adversarial" | "disagreement" => Some(column_name(irf, s, k)),
            "delta_progress" => aliases.delta.map(|d| column_name(&delta_irf_name(d), s, k)),
            "rnd" => full.keys().find(|n| n.starts_with("rnd@")).cloned(),
            _ => None,
        }
    };
    for irf in WM_IRFS {
        if let Some(values) = short(irf).and_then(|n| full.get(&n)) {
            out.push(irf, values.clone())?;
        }
    }
    for (name, values) in &full {
        out.push(name, values.clone())?;
    }
    for (j, name) in CATALOG.iter().enumerate() {
        let values = ids
            .iter()
            .map(|id| table.stimulus(id).unwrap().features.values[j])
            .collect();
        out.push(name, values)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityPoint {
    pub irf: String,
    pub step: u64,
    pub k: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub step: u64,
    /// Mean one-step adversarial total IR over the training trajectories.
    pub mean_adversarial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaChoice {
    pub delta: u64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub config_hash: String,
    pub crate_version: String,
    pub notes: Vec<String>,
    pub stimuli: usize,
    pub final_step: u64,
    pub k: usize,
    /// Held-out stimulus ids per split, shared by every model below.
    pub split_test_ids: Vec<Vec<String>>,
    pub reliability: Reliability,
    pub singles: Vec<SplitScore>,
    pub top_single: String,
    pub composites: Vec<SplitScore>,
    pub delta_search: Vec<DeltaChoice>,
    pub selected_delta: Option<u64>,
    pub stability: Vec<StabilityPoint>,
    pub scenario_matrix: ScenarioMatrix,
    pub complement_base: String,
    pub complementarity: Vec<SplitScore>,
    pub learning: Vec<LearningPoint>,
}

impl EvalReport {
    pub fn single(&self, name: &str) -> Option<&SplitScore> {
        self.singles.iter().find(|s| s.name == name)
    }

    pub fn stability_of(&self, irf: &str, step: u64, k: usize) -> Option<&StabilityPoint> {
        self.stability
            .iter()
            .find(|p| p.irf == irf && p.step == step && p.k == k)
    }
}

fn lasso(features: Vec<String>, fit: &FitConfig) -> ModelSpec {
    ModelSpec::Lasso {
        features,
        grid_size: fit.lambda_grid_size,
        grid_ratio: fit.lambda_grid_ratio,
    }
}

/// Scores that fail only because a feature is constant are skipped with a note.
fn try_score(
    name: &str,
    table: &FeatureTable,
    y: &[f64],
    spec: &ModelSpec,
    splits: &Splits,
    notes: &mut Vec<String>,
) -> Result<Option<SplitScore>> {
    match evaluate_splits(name, table, y, spec, splits) {
        Ok(s) => Ok(Some(s)),
        Err(Error::Degenerate(m)) => {
            log::warn!("skipping `{name}`: {m}");
            notes.push(format!("`{name}` skipped: {m}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Fits and evaluates every single IRF, composite and analysis the report
/// carries. Only stimuli present in `ratings` are used.
pub fn analyze(
    table: &IrTable,
    ratings: &RatingDataset,
    fit: &FitConfig,
    learning: Vec<LearningPoint>,
    config_hash: &str,
) -> Result<EvalReport> {
    let ids: Vec<String> = ratings
        .stimuli
        .iter()
        .map(|s| s.stimulus_id.clone())
        .collect();
    let mut aliases = Aliases::for_table(table)?;
    let mut notes = vec![
        "regression targets are raw mean ratings".to_string(),
        "single-feature r is reported as the across-split mean ± SE and pooled over all held-out predictions".to_string(),
    ];
    if !ratings.incomplete.is_empty() {
        notes.push(format!(
            "{} stimuli have incomplete rater coverage",
            ratings.incomplete.len()
        ));
    }

    let probe = design(table, &ids, &aliases)?;
    let y = probe.targets(ratings)?;
    let splits = Splits::new(ids.len(), fit.splits, fit.train_frac, fit.split_seed)?;

    // δ for the δ-progress alias: best mean held-out r at the final step.
    let mut deltas: Vec<u64> = table
        .columns()
        .iter()
        .filter_map(|(irf, _, _)| irf.strip_prefix("delta_progress_d")?.parse().ok())
        .collect();
    deltas.sort_unstable();
    deltas.dedup();
    let mut delta_search = Vec::new();
    for &d in &deltas {
        let name = column_name(&delta_irf_name(d), aliases.final_step, aliases.k);
        if probe.column(&name).is_none() {
            continue;
        }
        if let Some(s) = try_score(
            &name,
            &probe,
            &y,
            &ModelSpec::Ols(vec![name.clone()]),
            &splits,
            &mut notes,
        )? {
            delta_search.push(DeltaChoice {
                delta: d,
                mean: s.mean,
            });
        }
    }
    let selected_delta = delta_search
        .iter()
        .fold(None::<&DeltaChoice>, |best, c| match best {
            Some(b) if b.mean >= c.mean => Some(b),
            _ => Some(c),
        })
        .map(|c| c.delta);
    aliases.delta = selected_delta;
    let design = design(table, &ids, &aliases)?;

    let wm: Vec<String> = WM_IRFS
        .iter()
        .filter(|n| design.column(n).is_some())
        .map(|n| n.to_string())
        .collect();
    let features: Vec<String> = CATALOG.iter().map(|n| n.to_string()).collect();

    let mut singles = Vec::new();
    for name in wm.iter().chain(&features) {
        if let Some(s) = try_score(
            name,
            &design,
            &y,
            &ModelSpec::single(name),
            &splits,
            &mut notes,
        )? {
            singles.push(s);
        }
    }
    let top_single = singles
        .iter()
        .fold(None::<&SplitScore>, |best, s| match best {
            Some(b) if b.mean >= s.mean => Some(b),
            _ => Some(s),
        })
        .map(|s| s.name.clone())
        .ok_or_else(|| Error::Degenerate("no single feature could be evaluated".into()))?;

    let usable: Vec<String> = singles.iter().map(|s| s.name.clone()).collect();
    let pick = |names: &[String]| -> Vec<String> {
        names
            .iter()
            .filter(|n| usable.contains(n))
            .cloned()
            .collect()
    };
    let mut composites = Vec::new();
    for (name, members) in [
        ("composite_features", pick(&features)),
        ("composite_irfs", pick(&wm)),
        (
            "composite_all",
            pick(&[wm.clone(), features.clone()].concat()),
        ),
    ] {
        if members.len() >= 2 {
            if let Some(s) =
                try_score(name, &design, &y, &lasso(members, fit), &splits, &mut notes)?
            {
                composites.push(s);
            }
        }
    }

    let mut stability = Vec::new();
    for (irf, step, k) in table.columns() {
        let family = if irf.starts_with("delta_progress_d") {
            "delta_progress"
        } else {
            irf.as_str()
        };
        if !WM_IRFS.contains(&family) {
            continue;
        }
        let name = column_name(&irf, step, k);
        let spec = ModelSpec::Ols(vec![name.clone()]);
        if let Some(s) = try_score(&name, &design, &y, &spec, &splits, &mut notes)? {
            stability.push(StabilityPoint {
                irf,
                step,
                k,
                mean: s.mean,
                se: s.se,
            });
        }
    }

    let scenario_matrix = per_scenario_matrix(&design, &y, &usable)?;
    let complementarity = if usable.contains(&fit.complement_base) {
        complementarity(&fit.complement_base, &usable, &design, &y, &splits)?
    } else {
        notes.push(format!(
            "complementarity base `{}` unavailable",
            fit.complement_base
        ));
        Vec::new()
    };
    let reliability =
        split_half_reliability(ratings, fit.reliability_splits, fit.reliability_seed)?;

    Ok(EvalReport {
        version: REPORT_VERSION,
        config_hash: config_hash.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        notes,
        stimuli: ids.len(),
        final_step: aliases.final_step,
        k: aliases.k,
        split_test_ids: splits
            .splits
            .iter()
            .map(|(_, test)| test.iter().map(|&i| ids[i].clone()).collect())
            .collect(),
        reliability,
        singles,
        top_single,
        composites,
        delta_search,
        selected_delta,
        stability,
        scenario_matrix,
        complement_base: fit.complement_base.clone(),
        complementarity,
        learning,
    })
}
