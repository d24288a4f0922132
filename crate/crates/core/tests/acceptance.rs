//! End-to-end acceptance checks (`harness = false`): prints one PASS/FAIL
//! line per criterion and exits non-zero if any criterion fails.
//!
//! Runs the default pipeline twice (a few minutes each on one core); the
//! replications re-draw synthetic raters over the first run's IR table.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use curiolab::harness::*;
use curiolab::irf::{adversarial_reward, delta_progress_reward, read_ir_table, rnd_init, IrTable};
use curiolab::sim::{Scenario, SceneState};
use curiolab::stats::*;
use curiolab::wm::{init_wm, load_checkpoint, Arch, Normalization, OracleWm, TrainBatch};
use curiolab::Result;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256StarStar;

const REPLICATIONS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> Xoshiro256StarStar {
    Xoshiro256StarStar::seed_from_u64(seed)
}

fn gauss(r: &mut Xoshiro256StarStar) -> f64 {
    StandardNormal.sample(r)
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn default_run(dir: &Path) -> Result<(Pipeline, EvalReport, Duration)> {
    let mut config = PipelineConfig::default();
    config.output = dir.to_path_buf();
    let start = Instant::now();
    let p = Pipeline::new(config)?;
    let report = p.run()?;
    Ok((p, report, start.elapsed()))
}

/// Ratings for the table's stimuli from `model`, analysed like the fit stage.
fn replicate(table: &IrTable, model: &SyntheticRaterModel, seed: u64) -> Result<EvalReport> {
    let ids: Vec<String> = table
        .stimuli
        .iter()
        .map(|s| s.trajectory_id.clone())
        .collect();
    let features = design(table, &ids, &Aliases::for_table(table)?)?;
    let ratings = generate_synthetic_ratings(model, &features, seed)?;
    analyze(table, &ratings, &FitConfig::default(), Vec::new(), "")
}

fn driver(feature: &str, weight: f64, transform: Transform, flip: &[&str]) -> Driver {
    Driver {
        feature: feature.into(),
        weight,
        transform,
        flip_scenarios: flip.iter().map(|s| s.to_string()).collect(),
    }
}

// ---- 1 ----

fn oracle_zero(p: &Pipeline) -> Result<Outcome> {
    let (untrained, _) = load_checkpoint(&p.dir.join("checkpoints/wm0/step000000.cwm"))?;
    let config = &p.config;
    let (mut checked, mut failures) = (0, Vec::new());
    for &scenario in &config.data.scenarios {
        for i in 0..config.data.test_per_scenario {
            let id = format!("{scenario}_test_{i:03}");
            let traj = p.simulate_exact(&id, scenario)?;
            let oracle = OracleWm::for_trajectory(&traj)?;
            for &k in &config.score.ks {
                let adv = adversarial_reward(&oracle, &traj, k, &id)?;
                let old = adversarial_reward(&untrained, &traj, k, &id)?;
                let progress = delta_progress_reward(&untrained, &oracle, &traj, k, &id)?;
                if adv.total != 0.0
                    || progress.per_step != old.per_step
                    || progress.total != old.total
                {
                    failures.push(format!("{id}/k{k}"));
                }
                checked += 1;
            }
        }
    }
    Ok(outcome(
        failures.is_empty(),
        format!("{checked} trajectory×k cases exact, failures {failures:?}"),
    ))
}

// ---- 2 ----

fn relative_error(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6)
}

fn gradients(p: &Pipeline) -> Result<Outcome> {
    let start = Instant::now();
    let trajs: Vec<_> = [
        ("collide_train_000", Scenario::Collide),
        ("drape_train_001", Scenario::Drape),
        ("support_train_002", Scenario::Support),
    ]
    .iter()
    .map(|(id, scenario)| p.simulate_exact(id, *scenario))
    .collect::<Result<_>>()?;
    let norm = Normalization::fit(&trajs)?;
    let eps = 1e-4;
    let mut r = rng(2024);
    let (mut worst, mut probes) = (0.0f64, 0);

    let pairs: Vec<(&SceneState, &SceneState)> = trajs
        .iter()
        .flat_map(|t| t.states.windows(2).step_by(37).map(|w| (&w[0], &w[1])))
        .collect();
    let batch = TrainBatch::new(pairs)?;
    let wm = init_wm(7, &Arch::default())?.with_normalization(norm.clone())?;
    let (_, grad) = wm.loss_and_grad(&batch)?;
    for _ in 0..24 {
        let i = r.gen_range(0..grad.len());
        let (mut plus, mut minus) = (wm.clone(), wm.clone());
        plus.net.params[i] += eps;
        minus.net.params[i] -= eps;
        let numeric =
            (plus.loss_and_grad(&batch)?.0 - minus.loss_and_grad(&batch)?.0) / (2.0 * eps);
        worst = worst.max(relative_error(numeric, grad[i]));
        probes += 1;
    }

    let states: Vec<&SceneState> = trajs
        .iter()
        .flat_map(|t| t.states.iter().step_by(19))
        .collect();
    let c = &p.config.rnd;
    let pair = rnd_init(11, 12, c.embed_dim, &c.hidden, norm)?;
    let (_, grad) = pair.loss_and_grad(&states)?;
    for _ in 0..24 {
        let i = r.gen_range(0..grad.len());
        let (mut plus, mut minus) = (pair.clone(), pair.clone());
        plus.predictor.params[i] += eps;
        minus.predictor.params[i] -= eps;
        let numeric =
            (plus.loss_and_grad(&states)?.0 - minus.loss_and_grad(&states)?.0) / (2.0 * eps);
        worst = worst.max(relative_error(numeric, grad[i]));
        probes += 1;
    }
    let elapsed = start.elapsed();
    Ok(outcome(
        worst < 1e-5 && probes >= 20 && elapsed < Duration::from_secs(10),
        format!(
            "{probes} probes (WM + RND), worst relative error {worst:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    ))
}

// ---- 3 ----

fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, t) in x.iter().zip(y) {
        let z: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for i in 0..p {
            for j in 0..p {
                a[i][j] += z[i] * z[j];
            }
            a[i][p] += z[i] * t;
        }
    }
    for c in 0..p {
        let pivot = (c..p)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, pivot);
        for i in 0..p {
            if i != c {
                let f = a[i][c] / a[c][c];
                for j in c..=p {
                    a[i][j] -= f * a[c][j];
                }
            }
        }
    }
    (0..p).map(|i| a[i][p] / a[i][i]).collect()
}

/// Gradient of the squared-error term on the model's z-scored features.
fn smooth_gradient(model: &CompositeModel, x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            r.iter()
                .zip(model.mean.iter().zip(&model.std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();
    let resid: Vec<f64> = z
        .iter()
        .zip(y)
        .map(|(zr, t)| {
            t - model.intercept
                - zr.iter()
                    .zip(&model.coefficients)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        })
        .collect();
    (0..model.coefficients.len())
        .map(|j| -z.iter().zip(&resid).map(|(zr, e)| zr[j] * e).sum::<f64>() / n)
        .collect()
}

fn lasso_oracle() -> Result<Outcome> {
    let mut r = rng(5050);
    let (n, p) = (50, 5);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| gauss(&mut r)).collect())
        .collect();
    let beta = [1.2, -0.8, 0.0, 0.4, 0.05];
    let y: Vec<f64> = x
        .iter()
        .map(|row| {
            0.5 + row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + 0.5 * gauss(&mut r)
        })
        .collect();
    let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();

    let exact = normal_equations(&x, &y);
    let ols = lasso_fit(&names, &x, &y, 0.0)?;
    let (coef, intercept) = ols.raw_coefficients();
    let ls_err = coef
        .iter()
        .zip(&exact[1..])
        .map(|(a, b)| (a - b).abs())
        .fold((intercept - exact[0]).abs(), f64::max);

    let top = lambda_max(&x, &y)?;
    let zero = [top, 1.5 * top, 10.0 * top]
        .iter()
        .map(|&l| lasso_fit(&names, &x, &y, l).map(|m| m.coefficients.iter().all(|b| *b == 0.0)))
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .all(|z| z);

    let mut kkt = 0.0f64;
    for l in lambda_grid(&x, &y, 30, 1e-3)? {
        let model = lasso_fit(&names, &x, &y, l)?;
        for (g, b) in smooth_gradient(&model, &x, &y)
            .iter()
            .zip(&model.coefficients)
        {
            let violation = if *b == 0.0 {
                (g.abs() - l).max(0.0)
            } else {
                (g + l * b.signum()).abs()
            };
            kkt = kkt.max(violation);
        }
    }
    Ok(outcome(
        ls_err < 1e-6 && zero && kkt < 1e-6,
        format!("λ=0 max |Δβ| {ls_err:.1e}; all zero at λ ≥ λ_max: {zero}; worst KKT violation {kkt:.1e}"),
    ))
}

// ---- 4 ----

/// Reliability of a k-rater mean from one-way ANOVA mean squares.
fn analytic_reliability(responses: &[Vec<f64>]) -> f64 {
    let n = responses.len() as f64;
    let k = responses[0].len() as f64;
    let grand = responses.iter().flatten().sum::<f64>() / (n * k);
    let means: Vec<f64> = responses
        .iter()
        .map(|r| r.iter().sum::<f64>() / k)
        .collect();
    let msb = k * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n - 1.0);
    let msw = responses
        .iter()
        .zip(&means)
        .map(|(r, m)| r.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (n * (k - 1.0));
    (msb - msw) / msb
}

fn reliability_oracle() -> Result<Outcome> {
    let mut r = rng(4);
    let n = 120;
    let ids: Vec<String> = (0..n).map(|i| format!("s{i:03}")).collect();
    let scenarios: Vec<String> = (0..n).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
    let mut table = FeatureTable::new(ids, scenarios)?;
    table.push("truth", (0..n).map(|_| gauss(&mut r)).collect())?;
    let mut worst = 0.0f64;
    let mut cases = Vec::new();
    for (seed, noise) in [(1u64, 0.8), (2, 1.2), (3, 2.0)] {
        let model = SyntheticRaterModel {
            noise,
            drivers: vec![driver("truth", 0.8, Transform::Linear, &[])],
            ..SyntheticRaterModel::default()
        };
        let data = generate_synthetic_ratings(&model, &table, seed)?;
        let rel = split_half_reliability(&data, 20, seed)?;
        for (scenario, got) in &rel.per_scenario {
            let responses: Vec<Vec<f64>> = data
                .stimuli
                .iter()
                .filter(|s| &s.scenario == scenario)
                .map(|s| s.responses.iter().map(|(_, v)| *v as f64).collect())
                .collect();
            let analytic = analytic_reliability(&responses);
            worst = worst.max((got - analytic).abs());
            cases.push(format!("{got:.3}/{analytic:.3}"));
        }
    }
    let formula = (spearman_brown(0.5) - 2.0 / 3.0).abs();
    Ok(outcome(
        worst < 0.05 && formula <= 1e-12,
        format!(
            "split-half vs analytic (per scenario, σ ∈ {{0.8, 1.2, 2.0}}): {} — worst gap {worst:.3}; SB(0.5) − 2/3 = {formula:.1e}",
            cases.join(" ")
        ),
    ))
}

// ---- 5 ----

fn recovery(table: &IrTable, full_run: Duration) -> Result<Outcome> {
    let mut top = Vec::new();
    let mut complement = Vec::new();
    for seed in 0..REPLICATIONS {
        let model = SyntheticRaterModel {
            seed,
            ..SyntheticRaterModel::default()
        };
        top.push(replicate(table, &model, seed)?.top_single);

        let model = SyntheticRaterModel {
            seed,
            drivers: vec![
                driver("adversarial", 0.5, Transform::Linear, &[]),
                driver("collision_total", 0.5, Transform::Linear, &[]),
            ],
            ..SyntheticRaterModel::default()
        };
        let report = replicate(table, &model, seed)?;
        complement.push(
            report
                .complementarity
                .first()
                .map(|s| s.name.clone())
                .unwrap_or_default(),
        );
    }
    let top_hits = top.iter().filter(|n| *n == "adversarial").count();
    let comp_hits = complement
        .iter()
        .filter(|n| *n == "collision_total" || *n == "collision_mean")
        .count();
    Ok(outcome(
        top_hits >= 9 && comp_hits >= 9 && full_run < Duration::from_secs(300),
        format!(
            "adversarial top single {top_hits}/{REPLICATIONS} {top:?}; collisions first complement {comp_hits}/{REPLICATIONS} {complement:?}; full run {:.1} s",
            full_run.as_secs_f64()
        ),
    ))
}

// ---- 6 ----

fn stability(report: &EvalReport) -> Outcome {
    let mut spans = Vec::new();
    let mut pass = true;
    for irf in ["adversarial", "disagreement", "rnd"] {
        let values: Vec<f64> = report
            .stability
            .iter()
            .filter(|p| p.irf == irf && (irf == "rnd" || p.step == report.final_step))
            .map(|p| p.mean)
            .collect();
        let expected = if irf == "rnd" { 1 } else { 4 };
        if values.len() != expected {
            pass = false;
        }
        let span = values.iter().cloned().fold(f64::MIN, f64::max)
            - values.iter().cloned().fold(f64::MAX, f64::min);
        pass &= span < 0.1;
        spans.push(format!("{irf} {span:.3}"));
    }
    let (first, last) = (report.learning.first(), report.learning.last());
    let decreasing = matches!((first, last), (Some(a), Some(b)) if b.step > a.step && b.mean_adversarial < a.mean_adversarial);
    outcome(
        pass && decreasing,
        format!(
            "range of r across k at step {}: {} (rnd has no horizon); train adversarial {:.4} → {:.4}",
            report.final_step,
            spans.join(", "),
            first.map_or(f64::NAN, |p| p.mean_adversarial),
            last.map_or(f64::NAN, |p| p.mean_adversarial)
        ),
    )
}

// ---- 7 ----

fn generalization(table: &IrTable) -> Result<Outcome> {
    let flipped = "position_cov_trace_mean";
    let mut hits = 0;
    let mut flags = Vec::new();
    for seed in 0..REPLICATIONS {
        let model = SyntheticRaterModel {
            seed,
            drivers: vec![
                driver("adversarial", 1.0, Transform::Rank, &[]),
                driver(flipped, 0.3, Transform::Rank, &["contain", "support"]),
            ],
            ..SyntheticRaterModel::default()
        };
        let m = replicate(table, &model, seed)?.scenario_matrix;
        let flag = |name: &str| {
            m.features
                .iter()
                .position(|f| f == name)
                .map(|j| m.flags[j])
        };
        let (f, a) = (flag(flipped), flag("adversarial"));
        if f == Some(SignFlag::Mixed) && a == Some(SignFlag::Consistent) {
            hits += 1;
        }
        flags.push(format!("{f:?}/{a:?}"));
    }
    Ok(outcome(
        hits == REPLICATIONS,
        format!(
            "{flipped} mixed and adversarial consistent in {hits}/{REPLICATIONS}: {}",
            flags.join(" ")
        ),
    ))
}

// ---- 8 ----

fn determinism(a: &Path, b: &Path) -> Outcome {
    let (ta, tb) = (tree(a), tree(b));
    let differing: Vec<_> = ta
        .iter()
        .filter(|(k, v)| tb.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .chain(
            tb.keys()
                .filter(|k| !ta.contains_key(*k))
                .map(|k| k.display().to_string()),
        )
        .collect();
    outcome(
        differing.is_empty(),
        format!("{} files compared, differing {differing:?}", ta.len()),
    )
}

fn main() {
    let (dir_a, dir_b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (pipeline, report, elapsed) = default_run(dir_a.path()).expect("default run");
    let table = read_ir_table(&dir_a.path().join("ir_table.csv")).unwrap();

    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut check = |n: u32, name: &'static str, r: Result<Outcome>| {
        let o = r.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        println!(
            "criterion {n} ({name}): {} — {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };
    check(1, "oracle zero", oracle_zero(&pipeline));
    check(2, "gradient correctness", gradients(&pipeline));
    check(3, "lasso oracle", lasso_oracle());
    check(4, "reliability oracle", reliability_oracle());
    check(5, "generative recovery", recovery(&table, elapsed));
    check(6, "stability", Ok(stability(&report)));
    check(7, "generalization", generalization(&table));
    default_run(dir_b.path()).expect("second run");
    check(
        8,
        "determinism",
        Ok(determinism(dir_a.path(), dir_b.path())),
    );

    let failed: Vec<_> = results
        .iter()
        .filter(|(_, _, o)| !o.pass)
        .map(|(n, name, _)| format!("{n} ({name})"))
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        eprintln!("acceptance: failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
