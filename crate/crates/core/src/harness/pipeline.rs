//! The end-to-end run: generate → train → score → ratings → fit → report.
//!
//! Artifact tree under the output directory:
//!
//! ```text
//! config.toml                      canonical config, hash on the first line
//! trajectories/{train,test}/       <id>.clab + <id>.json
//! checkpoints/wm<i>/step<s>.cwm    one directory per ensemble member
//! ir_table.csv                     scored (test) stimuli
//! learning.csv                     mean train-split adversarial IR per checkpoint
//! ratings.csv                      synthetic ratings (absent with external ratings)
//! report/                          report.json, report.csv, *.svg
//! ```
//!
//! Every file carries the config hash. A stage reuses what is already on disk
//! when its hash matches and refuses to mix hashes otherwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::analysis::{analyze, design, Aliases, EvalReport, LearningPoint};
use super::config::PipelineConfig;
use super::raters::{generate_synthetic_ratings, ingest_ratings, write_ratings};
use super::report::{export_report, parse_report, ReportFormat, REPORT_JSON};
use crate::irf::{
    adversarial_reward, read_ir_table, rnd_init, rnd_train, sweep, write_ir_table, IrTable, Member,
    SweepSpec,
};
use crate::rng::{derive_seed, tag};
use crate::sim::{generate_scenario, simulate, store, Scenario, Trajectory};
use crate::stats::{parse_ratings, RatingDataset};
use crate::wm::{
    init_wm, load_checkpoint, save_checkpoint, train, Checkpoint, Dataset, Normalization, Schedule,
};
use crate::{Error, Result};

pub const SPLITS: [&str; 2] = ["train", "test"];

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name,
            source: Box::new(e),
        },
    })
}

fn mismatch(path: &Path) -> Error {
    Error::HashMismatch(format!(
        "{} was produced by a different configuration; use a fresh output directory",
        path.display()
    ))
}

/// Hash on a `# config_hash=` first line.
pub fn leading_hash(text: &str) -> Option<&str> {
    text.strip_prefix("# config_hash=")
        .map(|rest| rest.split(['\n', '\r']).next().unwrap_or(""))
}

pub struct LabeledTrajectories {
    pub train: Vec<(String, Trajectory)>,
    pub test: Vec<(String, Trajectory)>,
}

/// Checkpoints of each ensemble member, ascending by step.
pub type Ensemble = Vec<Vec<Checkpoint>>;

pub struct Pipeline {
    pub config: PipelineConfig,
    pub dir: PathBuf,
    hash: [u8; 32],
    hex: String,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Pipeline> {
        config.validate()?;
        let hash = config.hash();
        let hex = hex::encode(hash);
        let dir = config.output.clone();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("config.toml");
        if let Ok(existing) = fs::read_to_string(&path) {
            if leading_hash(&existing) != Some(hex.as_str()) {
                return Err(mismatch(&path));
            }
        }
        let text = format!("# config_hash={hex}\n{}", config.to_toml());
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(Pipeline {
            config,
            dir,
            hash,
            hex,
        })
    }

    pub fn hash_hex(&self) -> &str {
        &self.hex
    }

    fn ids(&self, split: &str) -> Vec<(String, Scenario)> {
        let d = &self.config.data;
        let n = if split == "train" {
            d.train_per_scenario
        } else {
            d.test_per_scenario
        };
        d.scenarios
            .iter()
            .flat_map(|&s| (0..n).map(move |i| (format!("{s}_{split}_{i:03}"), s)))
            .collect()
    }

    /// Seed of the scene behind a trajectory id.
    pub fn scene_seed(&self, id: &str) -> u64 {
        derive_seed(self.config.seed, tag(id))
    }

    /// Full-precision trajectory for `id`, recomputed from its seed.
    pub fn simulate_exact(&self, id: &str, scenario: Scenario) -> Result<Trajectory> {
        let sim = &self.config.sim;
        let scene = generate_scenario(scenario, self.scene_seed(id), sim)?;
        simulate(&scene, sim.steps, sim.dt, sim.contact_threshold)
    }

    pub fn generate(&self) -> Result<LabeledTrajectories> {
        stage("generate", || {
            let mut out = Vec::new();
            for split in SPLITS {
                let dir = self.dir.join("trajectories").join(split);
                let trajs = self
                    .ids(split)
                    .into_par_iter()
                    .map(|(id, scenario)| -> Result<_> {
                        if dir.join(format!("{id}.clab")).exists() {
                            let (traj, hash) = store::read(&dir, &id)?;
                            if hash != self.hash {
                                return Err(mismatch(&dir.join(format!("{id}.clab"))));
                            }
                            return Ok((id, traj));
                        }
                        let traj = self.simulate_exact(&id, scenario)?;
                        store::write(&dir, &id, &traj, &self.hash)?;
                        // Continue with exactly what was stored.
                        Ok((id, traj.quantized()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push(trajs);
            }
            let test = out.pop().unwrap();
            let train = out.pop().unwrap();
            Ok(LabeledTrajectories { train, test })
        })
    }

    fn member_seed(&self, i: usize) -> u64 {
        derive_seed(self.config.seed, tag(&format!("wm{i}")))
    }

    pub fn train(&self, data: &LabeledTrajectories) -> Result<Ensemble> {
        stage("train", || {
            let w = &self.config.wm;
            let steps = w.checkpoints();
            let trajs: Vec<Trajectory> = data.train.iter().map(|(_, t)| t.clone()).collect();
            let norm = Normalization::fit(&trajs)?;
            (0..w.ensemble)
                .into_par_iter()
                .map(|i| -> Result<Vec<Checkpoint>> {
                    let dir = self.dir.join("checkpoints").join(format!("wm{i}"));
                    let paths: Vec<PathBuf> = steps
                        .iter()
                        .map(|s| dir.join(format!("step{s:06}.cwm")))
                        .collect();
                    if paths.iter().all(|p| p.exists()) {
                        return paths
                            .iter()
                            .map(|p| {
                                let (c, hash) = load_checkpoint(p)?;
                                if hash != self.hash {
                                    return Err(mismatch(p));
                                }
                                Ok(c)
                            })
                            .collect();
                    }
                    let mut wm =
                        init_wm(self.member_seed(i), &w.arch)?.with_normalization(norm.clone())?;
                    let schedule = Schedule {
                        checkpoints: steps.clone(),
                        lr: w.lr,
                        batch_size: w.batch_size,
                    };
                    let ckpts = train(&mut wm, &Dataset::new(&trajs), &schedule)?;
                    for (c, p) in ckpts.iter().zip(&paths) {
                        save_checkpoint(p, c, &self.hash)?;
                    }
                    Ok(ckpts)
                })
                .collect()
        })
    }

    pub fn score(
        &self,
        data: &LabeledTrajectories,
        ensemble: &Ensemble,
    ) -> Result<(IrTable, Vec<LearningPoint>)> {
        stage("score", || {
            let table_path = self.dir.join("ir_table.csv");
            let learning_path = self.dir.join("learning.csv");
            if table_path.exists() && learning_path.exists() {
                let table = read_ir_table(&table_path)?;
                if table.config_hash.as_deref() != Some(self.hex.as_str()) {
                    return Err(mismatch(&table_path));
                }
                let learning = read_learning(&learning_path, &self.hex)?;
                return Ok((table, learning));
            }
            let c = &self.config;
            let train_trajs: Vec<Trajectory> = data.train.iter().map(|(_, t)| t.clone()).collect();
            let mut rnd = rnd_init(
                derive_seed(c.seed, tag("rnd-target")),
                derive_seed(c.seed, tag("rnd-predictor")),
                c.rnd.embed_dim,
                &c.rnd.hidden,
                Normalization::fit(&train_trajs)?,
            )?;
            rnd_train(
                &mut rnd,
                &train_trajs,
                c.rnd.steps,
                c.rnd.lr,
                c.rnd.batch_size,
            )?;

            let members: Vec<BTreeMap<u64, Member>> = ensemble
                .iter()
                .map(|ck| ck.iter().map(|c| (c.step, Member::Trained(c))).collect())
                .collect();
            let spec = SweepSpec {
                steps: c.wm.checkpoints(),
                ks: c.score.ks.clone(),
                deltas: c.effective_deltas(),
                bins: c.score.bins,
            };
            let test: Vec<(String, &Trajectory)> =
                data.test.iter().map(|(id, t)| (id.clone(), t)).collect();
            let mut table = sweep(&test, &members, Some(&rnd), &spec)?;
            table.config_hash = Some(self.hex.clone());
            write_ir_table(&table_path, &table)?;

            let learning = ensemble[0]
                .iter()
                .map(|ck| -> Result<LearningPoint> {
                    let totals = data
                        .train
                        .par_iter()
                        .map(|(id, t)| adversarial_reward(ck, t, 1, id).map(|s| s.total))
                        .collect::<Result<Vec<f64>>>()?;
                    Ok(LearningPoint {
                        step: ck.step,
                        mean_adversarial: totals.iter().sum::<f64>() / totals.len() as f64,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_learning(&learning_path, &self.hex, &learning)?;
            Ok((table, learning))
        })
    }

    pub fn ratings(&self, table: &IrTable) -> Result<RatingDataset> {
        stage("ratings", || {
            if let Some(path) = &self.config.ratings {
                return ingest_ratings(path);
            }
            let path = self.dir.join("ratings.csv");
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let data = parse_ratings(&text, &path.display().to_string())?;
                if data.config_hash.as_deref() != Some(self.hex.as_str()) {
                    return Err(mismatch(&path));
                }
                return Ok(data);
            }
            let ids: Vec<String> = table
                .stimuli
                .iter()
                .map(|s| s.trajectory_id.clone())
                .collect();
            let features = design(table, &ids, &Aliases::for_table(table)?)?;
            let mut data = generate_synthetic_ratings(
                &self.config.raters,
                &features,
                self.config.raters.seed,
            )?;
            data.config_hash = Some(self.hex.clone());
            write_ratings(&path, &data)?;
            Ok(data)
        })
    }

    pub fn fit(
        &self,
        table: &IrTable,
        ratings: &RatingDataset,
        learning: Vec<LearningPoint>,
    ) -> Result<EvalReport> {
        stage("fit", || {
            analyze(table, ratings, &self.config.fit, learning, &self.hex)
        })
    }

    pub fn report(&self, report: &EvalReport) -> Result<Vec<PathBuf>> {
        stage("report", || {
            verify_tree(&self.dir, &self.hex)?;
            export_report(report, &self.dir.join("report"), ReportFormat::All)
        })
    }

    pub fn run(&self) -> Result<EvalReport> {
        let data = self.generate()?;
        let ensemble = self.train(&data)?;
        let (table, learning) = self.score(&data, &ensemble)?;
        let ratings = self.ratings(&table)?;
        let report = self.fit(&table, &ratings, learning)?;
        self.report(&report)?;
        Ok(report)
    }
}

pub fn run_pipeline(config: PipelineConfig) -> Result<EvalReport> {
    Pipeline::new(config)?.run()
}

fn write_learning(path: &Path, hex: &str, points: &[LearningPoint]) -> Result<()> {
    let mut out = format!("# config_hash={hex}\nstep,mean_adversarial\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.step, p.mean_adversarial);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_learning(path: &Path, hex: &str) -> Result<Vec<LearningPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if leading_hash(&text) != Some(hex) {
        return Err(mismatch(path));
    }
    let bad = || Error::format("learning curve", format!("{} is malformed", path.display()));
    let mut lines = text.lines().skip(1);
    if lines.next() != Some("step,mean_adversarial") {
        return Err(bad());
    }
    lines
        .map(|l| {
            let (s, m) = l.split_once(',').ok_or_else(bad)?;
            Ok(LearningPoint {
                step: s.parse().map_err(|_| bad())?,
                mean_adversarial: m.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Hash recorded in one artifact, if it is a kind of file the pipeline writes.
fn artifact_hash(path: &Path) -> Result<Option<String>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let read = || fs::read_to_string(path).map_err(|e| Error::io(path, e));
    Ok(match ext {
        "clab" => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            Some(hex::encode(store::decode(&bytes)?.config_hash))
        }
        "cwm" => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            Some(hex::encode(crate::wm::decode_checkpoint(&bytes)?.1))
        }
        "json" => {
            let v: serde_json::Value = serde_json::from_str(&read()?)?;
            v.get("config_hash")
                .and_then(|h| h.as_str())
                .map(str::to_string)
        }
        "csv" | "toml" => leading_hash(&read()?).map(str::to_string),
        "svg" => {
            let text = read()?;
            text.split_once("<desc>config_hash=")
                .and_then(|(_, rest)| rest.split_once("</desc>"))
                .map(|(h, _)| h.to_string())
        }
        _ => return Ok(None),
    })
}

/// Refuses an artifact tree in which any file carries a different (or no) hash.
pub fn verify_tree(dir: &Path, hex: &str) -> Result<()> {
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&d)
            .map_err(|e| Error::io(&d, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(&d, err)))
            .collect::<Result<_>>()?;
        entries.sort();
        for path in entries {
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let known = matches!(
                path.extension().and_then(|e| e.to_str()),
                Some("clab" | "cwm" | "json" | "csv" | "toml" | "svg")
            );
            if known && artifact_hash(&path)?.as_deref() != Some(hex) {
                return Err(mismatch(&path));
            }
        }
    }
    Ok(())
}

/// Re-renders the report files of an existing run directory.
pub fn rerender(dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    stage("report", || {
        let path = dir.join("report").join(REPORT_JSON);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let report = parse_report(&text)?;
        verify_tree(dir, &report.config_hash)?;
        export_report(&report, &dir.join("report"), format)
    })
}
