//! Rating datasets and split-half reliability.
//!
//! Ratings CSV: an optional `# config_hash=<hex>` line, then the header
//! `stimulus_id,scenario,rater_id,response` and one row per response.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{mean, pearson_r, sem};
use crate::rng::{derive_seed, rng};
use crate::{Error, Result};

const HEADER: [&str; 4] = ["stimulus_id", "scenario", "rater_id", "response"];

#[derive(Clone, Debug, PartialEq)]
pub struct StimulusRatings {
    pub stimulus_id: String,
    pub scenario: String,
    /// `(rater_id, response)` in file order.
    pub responses: Vec<(String, u8)>,
}

impl StimulusRatings {
    pub fn mean(&self) -> f64 {
        self.responses.iter().map(|(_, r)| *r as f64).sum::<f64>() / self.responses.len() as f64
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingDataset {
    pub config_hash: Option<String>,
    /// Sorted by stimulus id.
    pub stimuli: Vec<StimulusRatings>,
    /// Stimuli not rated by every rater that appears in the file.
    pub incomplete: Vec<String>,
}

impl RatingDataset {
    /// Builds a dataset, enforcing the response range, uniqueness per
    /// (stimulus, rater) and at least two responses per stimulus.
    pub fn new(mut stimuli: Vec<StimulusRatings>) -> Result<RatingDataset> {
        stimuli.sort_by(|a, b| a.stimulus_id.cmp(&b.stimulus_id));
        let mut raters = BTreeSet::new();
        for (i, s) in stimuli.iter().enumerate() {
            if i > 0 && stimuli[i - 1].stimulus_id == s.stimulus_id {
                return Err(Error::InvalidInput(format!(
                    "stimulus `{}` listed twice",
                    s.stimulus_id
                )));
            }
            if s.responses.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "stimulus `{}` has fewer than 2 responses",
                    s.stimulus_id
                )));
            }
            let mut seen = BTreeSet::new();
            for (rater, r) in &s.responses {
                if !(1..=5).contains(r) {
                    return Err(Error::InvalidInput(format!("response {r} outside 1..5")));
                }
                if !seen.insert(rater) {
                    return Err(Error::InvalidInput(format!(
                        "rater `{rater}` rated `{}` twice",
                        s.stimulus_id
                    )));
                }
                raters.insert(rater.clone());
            }
        }
        let incomplete = stimuli
            .iter()
            .filter(|s| s.responses.len() < raters.len())
            .map(|s| s.stimulus_id.clone())
            .collect();
        Ok(RatingDataset {
            config_hash: None,
            stimuli,
            incomplete,
        })
    }

    pub fn get(&self, id: &str) -> Option<&StimulusRatings> {
        self.stimuli
            .binary_search_by(|s| s.stimulus_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.stimuli[i])
    }

    /// Mean rating per stimulus id.
    pub fn means(&self) -> BTreeMap<&str, f64> {
        self.stimuli
            .iter()
            .map(|s| (s.stimulus_id.as_str(), s.mean()))
            .collect()
    }

    pub fn scenarios(&self) -> BTreeSet<&str> {
        self.stimuli.iter().map(|s| s.scenario.as_str()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(h) = &self.config_hash {
            let _ = writeln!(out, "# config_hash={h}");
        }
        out.push_str(&HEADER.join(","));
        out.push('\n');
        for s in &self.stimuli {
            for (rater, r) in &s.responses {
                let _ = writeln!(out, "{},{},{rater},{r}", s.stimulus_id, s.scenario);
            }
        }
        out
    }
}

/// Parses a ratings CSV; `source` names the input in error messages.
pub fn parse_ratings(text: &str, source: &str) -> Result<RatingDataset> {
    let err = |line: usize, message: String| Error::Ratings {
        path: source.to_string(),
        message: format!("line {line}: {message}"),
    };
    let mut body = text;
    let mut hash = None;
    if let Some(rest) = text.strip_prefix("# config_hash=") {
        let (h, tail) = rest.split_once('\n').unwrap_or((rest, ""));
        let h = h.trim_end_matches('\r');
        if h.len() != 64 || hex::decode(h).is_err() {
            return Err(err(1, "config hash is not 64 hex digits".into()));
        }
        hash = Some(h.to_string());
        body = tail;
    }
    let offset = usize::from(hash.is_some());
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| err(offset + 1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(err(
            offset + 1,
            format!("expected header `{}`", HEADER.join(",")),
        ));
    }

    struct Entry {
        scenario: String,
        scenario_line: usize,
        responses: Vec<(String, u8)>,
        lines: BTreeMap<String, usize>,
    }
    let mut by_id: BTreeMap<String, Entry> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(offset + line, e.to_string())
        })?;
        let line = offset + rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != HEADER.len() {
            return Err(err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let (id, scenario, rater) = (&rec[0], &rec[1], &rec[2]);
        if id.is_empty() || scenario.is_empty() || rater.is_empty() {
            return Err(err(line, "empty field".into()));
        }
        let response: u8 = match rec[3].parse() {
            Ok(r @ 1..=5) => r,
            _ => {
                return Err(err(
                    line,
                    format!("response `{}` is not an integer in 1..5", &rec[3]),
                ))
            }
        };
        let entry = by_id.entry(id.to_string()).or_insert_with(|| Entry {
            scenario: scenario.to_string(),
            scenario_line: line,
            responses: Vec::new(),
            lines: BTreeMap::new(),
        });
        if entry.scenario != scenario {
            return Err(err(
                line,
                format!(
                    "stimulus `{id}` has scenario `{scenario}` but `{}` on line {}",
                    entry.scenario, entry.scenario_line
                ),
            ));
        }
        if let Some(first) = entry.lines.insert(rater.to_string(), line) {
            return Err(err(
                line,
                format!("duplicate response for stimulus `{id}` and rater `{rater}` (lines {first} and {line})"),
            ));
        }
        entry.responses.push((rater.to_string(), response));
    }
    if by_id.is_empty() {
        return Err(err(offset + 1, "no ratings".into()));
    }
    let stimuli = by_id
        .into_iter()
        .map(|(id, e)| StimulusRatings {
            stimulus_id: id,
            scenario: e.scenario,
            responses: e.responses,
        })
        .collect();
    let mut data = RatingDataset::new(stimuli).map_err(|e| Error::Ratings {
        path: source.to_string(),
        message: e.to_string(),
    })?;
    data.config_hash = hash;
    Ok(data)
}

/// Reliability of a test twice as long as one with reliability `r`.
pub fn spearman_brown(r: f64) -> f64 {
    2.0 * r / (1.0 + r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reliability {
    /// Spearman–Brown corrected split-half correlation, averaged over splits.
    pub per_scenario: BTreeMap<String, f64>,
    /// Mean and standard error across scenarios.
    pub mean: f64,
    pub sem: f64,
    /// The same statistic with all stimuli in one group: the bound that
    /// applies to cross-scenario correlations.
    pub pooled: f64,
}

/// Randomly halves each stimulus' raters `n_splits` times (the extra rater of
/// an odd count goes to the first half), correlates the half means across
/// each scenario's stimuli and applies the Spearman–Brown correction.
pub fn split_half_reliability(
    data: &RatingDataset,
    n_splits: usize,
    seed: u64,
) -> Result<Reliability> {
    if n_splits == 0 {
        return Err(Error::Config("n_splits must be >= 1".into()));
    }
    let mut groups: BTreeMap<&str, Vec<&StimulusRatings>> = BTreeMap::new();
    for s in &data.stimuli {
        if s.responses.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "stimulus `{}` has fewer than 2 raters",
                s.stimulus_id
            )));
        }
        groups.entry(&s.scenario).or_default().push(s);
    }
    if groups.is_empty() {
        return Err(Error::InvalidInput("no stimuli".into()));
    }
    let all: Vec<&StimulusRatings> = data.stimuli.iter().collect();
    let mut sums: BTreeMap<&str, f64> = groups.keys().map(|k| (*k, 0.0)).collect();
    let mut pooled = 0.0;
    for split in 0..n_splits {
        let mut r = rng(derive_seed(seed, split as u64));
        let pooled_group = ("", &all);
        for (scenario, stimuli) in groups.iter().map(|(k, v)| (*k, v)).chain([pooled_group]) {
            let mut a = Vec::with_capacity(stimuli.len());
            let mut b = Vec::with_capacity(stimuli.len());
            for s in stimuli {
                let mut values: Vec<f64> = s.responses.iter().map(|(_, v)| *v as f64).collect();
                values.shuffle(&mut r);
                let (first, second) = values.split_at(values.len().div_ceil(2));
                a.push(mean(first));
                b.push(mean(second));
            }
            let raw = pearson_r(&a, &b).map_err(|e| match e {
                Error::Degenerate(_) => {
                    Error::Degenerate(format!("half means of scenario `{scenario}` are constant"))
                }
                e => e,
            })?;
            match sums.get_mut(scenario) {
                Some(sum) => *sum += spearman_brown(raw),
                None => pooled += spearman_brown(raw),
            }
        }
    }
    let per_scenario: BTreeMap<String, f64> = sums
        .into_iter()
        .map(|(k, v)| (k.to_string(), v / n_splits as f64))
        .collect();
    let values: Vec<f64> = per_scenario.values().copied().collect();
    Ok(Reliability {
        mean: mean(&values),
        sem: sem(&values),
        pooled: pooled / n_splits as f64,
        per_scenario,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula() {
        assert!((spearman_brown(0.5) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(spearman_brown(1.0), 1.0);
    }
}
