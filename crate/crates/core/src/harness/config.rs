//! Pipeline configuration: one versioned TOML document.
//!
//! Every section is optional and falls back to the desk-scale defaults. The
//! config hash covers the canonical re-serialisation of the parsed document
//! (minus the output directory) and the crate version, so two runs share a
//! hash exactly when they must produce the same artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::raters::SyntheticRaterModel;
use crate::sim::{Scenario, SimConfig};
use crate::wm::Arch;
use crate::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Where the run is written. Not part of the canonical document, so the
    /// same settings give identical artifacts in any directory.
    #[serde(default = "default_output", skip_serializing)]
    pub output: PathBuf,
    /// Externally collected ratings; synthetic raters are used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratings: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub wm: WmConfig,
    #[serde(default)]
    pub rnd: RndConfig,
    #[serde(default)]
    pub score: ScoreConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub raters: SyntheticRaterModel,
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub scenarios: Vec<Scenario>,
    pub train_per_scenario: usize,
    /// Held-out trajectories per scenario; these are the rated stimuli.
    pub test_per_scenario: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            scenarios: Scenario::ALL.to_vec(),
            train_per_scenario: 40,
            test_per_scenario: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WmConfig {
    pub arch: Arch,
    /// Total optimizer steps.
    pub steps: u64,
    pub checkpoint_every: u64,
    pub lr: f64,
    pub batch_size: usize,
    /// Independently seeded models; the first is the primary model.
    pub ensemble: usize,
}

impl Default for WmConfig {
    fn default() -> Self {
        WmConfig {
            arch: Arch::default(),
            steps: 4000,
            checkpoint_every: 500,
            lr: 1e-3,
            batch_size: 16,
            ensemble: 3,
        }
    }
}

impl WmConfig {
    pub fn checkpoints(&self) -> Vec<u64> {
        if self.steps == 0 {
            return vec![0];
        }
        let every = self.checkpoint_every.max(1);
        let mut steps: Vec<u64> = (0..=self.steps / every).map(|i| i * every).collect();
        if *steps.last().unwrap() != self.steps {
            steps.push(self.steps);
        }
        steps
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RndConfig {
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub steps: u64,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for RndConfig {
    fn default() -> Self {
        RndConfig {
            embed_dim: 16,
            hidden: vec![32],
            steps: 2000,
            lr: 1e-3,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreConfig {
    pub ks: Vec<usize>,
    pub deltas: Vec<u64>,
    /// Time bins for the collision features.
    pub bins: usize,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            ks: vec![1, 2, 3, 4],
            deltas: vec![500, 1000, 2000],
            bins: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub splits: usize,
    pub train_frac: f64,
    pub split_seed: u64,
    pub lambda_grid_size: usize,
    pub lambda_grid_ratio: f64,
    pub reliability_splits: usize,
    pub reliability_seed: u64,
    /// Base feature of the complementarity ranking.
    pub complement_base: String,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            splits: 10,
            train_frac: 0.8,
            split_seed: 0,
            lambda_grid_size: 30,
            lambda_grid_ratio: 1e-3,
            reliability_splits: 20,
            reliability_seed: 0,
            complement_base: "adversarial".into(),
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            seed: 0,
            output: default_output(),
            ratings: None,
            data: DataConfig::default(),
            sim: SimConfig::default(),
            wm: WmConfig::default(),
            rnd: RndConfig::default(),
            score: ScoreConfig::default(),
            fit: FitConfig::default(),
            raters: SyntheticRaterModel::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        // Check the version before anything else so future documents get a
        // version error rather than an unknown-field error.
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        match raw.get("version") {
            Some(toml::Value::Integer(v)) if *v == CONFIG_VERSION as i64 => {}
            Some(toml::Value::Integer(v)) => {
                return Err(Error::Version {
                    kind: "config",
                    found: (*v).clamp(0, u32::MAX as i64) as u32,
                    supported: CONFIG_VERSION,
                })
            }
            _ => return Err(Error::Config("missing integer `version`".into())),
        }
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return Err(Error::Version {
                kind: "config",
                found: self.version,
                supported: CONFIG_VERSION,
            });
        }
        self.sim.validate()?;
        let d = &self.data;
        if d.scenarios.is_empty() {
            return bad("data.scenarios is empty".into());
        }
        let mut sorted = d.scenarios.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != d.scenarios.len() {
            return bad("data.scenarios lists a scenario twice".into());
        }
        if d.train_per_scenario == 0 {
            return bad("data.train_per_scenario must be >= 1".into());
        }
        if d.test_per_scenario < 3 {
            return bad("data.test_per_scenario must be >= 3 for per-scenario correlations".into());
        }
        let w = &self.wm;
        self.wm.arch.sizes(crate::wm::INPUT, crate::wm::FEATURES)?;
        if w.steps > 0 && w.checkpoint_every == 0 {
            return bad("wm.checkpoint_every must be >= 1".into());
        }
        if !(w.lr.is_finite() && w.lr >= 0.0) || w.batch_size == 0 || w.ensemble == 0 {
            return bad("wm.lr must be >= 0 and wm.batch_size, wm.ensemble >= 1".into());
        }
        let r = &self.rnd;
        if r.embed_dim == 0
            || r.hidden.contains(&0)
            || r.batch_size == 0
            || !(r.lr.is_finite() && r.lr >= 0.0)
        {
            return bad("rnd: embed_dim, hidden sizes and batch_size must be >= 1, lr >= 0".into());
        }
        let s = &self.score;
        if s.ks.is_empty() || s.ks.contains(&0) || s.bins == 0 {
            return bad("score.ks must be non-empty with values >= 1, score.bins >= 1".into());
        }
        if s.ks.iter().any(|&k| k + 1 >= self.sim.steps) {
            return bad(format!(
                "score.ks must stay below sim.steps − 1 = {}",
                self.sim.steps - 1
            ));
        }
        let ckpts = w.checkpoints();
        for &delta in &s.deltas {
            if delta == 0 || (w.steps > 0 && delta % w.checkpoint_every != 0) {
                return bad(format!(
                    "score.deltas: {delta} is not a positive multiple of wm.checkpoint_every"
                ));
            }
            if ckpts
                .iter()
                .any(|&c| c >= delta && !ckpts.contains(&(c - delta)))
            {
                return bad(format!(
                    "score.deltas: {delta} needs checkpoints the schedule lacks"
                ));
            }
        }
        let f = &self.fit;
        if f.splits == 0 || !(f.train_frac > 0.0 && f.train_frac < 1.0) || f.reliability_splits == 0
        {
            return bad(
                "fit: splits and reliability_splits must be >= 1, train_frac in (0, 1)".into(),
            );
        }
        let rated = d.scenarios.len() * d.test_per_scenario;
        let n_train = (f.train_frac * rated as f64).round() as usize;
        if self.ratings.is_none() && (n_train < 3 || rated - n_train.min(rated) < 3) {
            return bad(format!(
                "{rated} test stimuli cannot be split into >= 3 train and >= 3 test at fit.train_frac = {}",
                f.train_frac
            ));
        }
        if f.lambda_grid_size == 0 || !(f.lambda_grid_ratio > 0.0 && f.lambda_grid_ratio <= 1.0) {
            return bad("fit: lambda_grid_size >= 1 and lambda_grid_ratio in (0, 1]".into());
        }
        self.raters.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical config (output path excluded) and crate version.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.to_toml().as_bytes());
        h.update(b"\0curiolab ");
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.finalize().into()
    }

    /// Deltas that fit inside the training schedule.
    pub fn effective_deltas(&self) -> Vec<u64> {
        self.score
            .deltas
            .iter()
            .copied()
            .filter(|&d| d <= self.wm.steps)
            .collect()
    }
}
