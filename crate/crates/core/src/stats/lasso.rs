//! L1-regularised linear models by cyclic coordinate descent.
//!
//! Features are z-scored on the fitting data (divisor n − 1) and the problem
//! solved is `min ‖y − ȳ − Zβ‖²/(2n) + λ‖β‖₁`, in covariance form so that a
//! sweep costs O(p²) regardless of the number of rows.

use crate::{Error, Result};

const TOLERANCE: f64 = 1e-8;
const MAX_SWEEPS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct CompositeModel {
    pub features: Vec<String>,
    /// Coefficients on the z-scored features; 0 for dropped ones.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub mean: Vec<f64>,
    /// Training-data standard deviations; 1 for dropped features.
    pub std: Vec<f64>,
    /// Features constant on the training data.
    pub dropped: Vec<String>,
    pub sweeps: usize,
}

impl CompositeModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .zip(self.mean.iter().zip(&self.std))
                .map(|((b, x), (m, s))| b * (x - m) / s)
                .sum::<f64>()
    }

    /// Coefficients and intercept on the original feature scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let coef: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.std)
            .map(|(b, s)| b / s)
            .collect();
        let shift: f64 = coef.iter().zip(&self.mean).map(|(c, m)| c * m).sum();
        (coef, self.intercept - shift)
    }

    pub fn nonzero(&self) -> usize {
        self.coefficients.iter().filter(|b| **b != 0.0).count()
    }
}

/// Standardised sufficient statistics of one design.
struct Problem {
    mean: Vec<f64>,
    std: Vec<f64>,
    keep: Vec<bool>,
    /// ZᵀZ / n, row-major.
    gram: Vec<f64>,
    /// Zᵀ(y − ȳ) / n.
    corr: Vec<f64>,
    ybar: f64,
}

fn check_design(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::InvalidInput("design matrix has no rows".into()));
    }
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidInput("design rows differ in length".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression data"));
    }
    Ok(p)
}

impl Problem {
    fn new<'a>(rows: impl Iterator<Item = (&'a [f64], f64)> + Clone, p: usize) -> Problem {
        let n = rows.clone().count() as f64;
        let mut mean = vec![0.0; p];
        let mut ybar = 0.0;
        for (r, y) in rows.clone() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
            ybar += y / n;
        }
        let mut std = vec![0.0; p];
        for (r, _) in rows.clone() {
            std.iter_mut()
                .zip(r.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m).powi(2));
        }
        let mut keep = vec![false; p];
        for j in 0..p {
            std[j] = (std[j] / (n - 1.0).max(1.0)).sqrt();
            keep[j] = std[j] > 1e-12 * (1.0 + mean[j].abs());
            if !keep[j] {
                std[j] = 1.0;
            }
        }
        let mut gram = vec![0.0; p * p];
        let mut corr = vec![0.0; p];
        let mut z = vec![0.0; p];
        for (r, y) in rows {
            for j in 0..p {
                z[j] = if keep[j] {
                    (r[j] - mean[j]) / std[j]
                } else {
                    0.0
                };
            }
            for j in 0..p {
                corr[j] += z[j] * (y - ybar) / n;
                for k in j..p {
                    gram[j * p + k] += z[j] * z[k] / n;
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                gram[j * p + k] = gram[k * p + j];
            }
        }
        Problem {
            mean,
            std,
            keep,
            gram,
            corr,
            ybar,
        }
    }

    fn lambda_max(&self) -> f64 {
        self.corr
            .iter()
            .zip(&self.keep)
            .filter(|(_, k)| **k)
            .fold(0.0, |m, (c, _)| m.max(c.abs()))
    }

    /// Coordinate descent from `beta`; returns the number of sweeps.
    fn solve(&self, lambda: f64, beta: &mut [f64]) -> usize {
        let p = self.corr.len();
        // q = Gβ, kept current as coefficients move.
        let mut q = vec![0.0; p];
        for j in 0..p {
            if beta[j] != 0.0 {
                for k in 0..p {
                    q[k] += self.gram[k * p + j] * beta[j];
                }
            }
        }
        for sweep in 1..=MAX_SWEEPS {
            let mut max_change = 0.0f64;
            for j in 0..p {
                let gjj = self.gram[j * p + j];
                if !self.keep[j] || gjj <= 0.0 {
                    continue;
                }
                let rho = self.corr[j] - q[j] + gjj * beta[j];
                let new = soft_threshold(rho, lambda) / gjj;
                let change = new - beta[j];
                if change != 0.0 {
                    for k in 0..p {
                        q[k] += self.gram[k * p + j] * change;
                    }
                    beta[j] = new;
                    max_change = max_change.max(change.abs());
                }
            }
            if max_change < TOLERANCE {
                return sweep;
            }
        }
        MAX_SWEEPS
    }

    fn model(
        &self,
        names: &[String],
        beta: Vec<f64>,
        lambda: f64,
        sweeps: usize,
    ) -> CompositeModel {
        CompositeModel {
            features: names.to_vec(),
            coefficients: beta,
            intercept: self.ybar,
            lambda,
            mean: self.mean.clone(),
            std: self.std.clone(),
            dropped: names
                .iter()
                .zip(&self.keep)
                .filter(|(_, k)| !**k)
                .map(|(n, _)| n.clone())
                .collect(),
            sweeps,
        }
    }

    fn predict(&self, beta: &[f64], row: &[f64]) -> f64 {
        self.ybar
            + (0..beta.len())
                .filter(|&j| self.keep[j])
                .map(|j| beta[j] * (row[j] - self.mean[j]) / self.std[j])
                .sum::<f64>()
    }
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

fn rows<'a>(x: &'a [Vec<f64>], y: &'a [f64]) -> impl Iterator<Item = (&'a [f64], f64)> + Clone {
    x.iter().map(Vec::as_slice).zip(y.iter().copied())
}

pub fn lasso_fit(
    names: &[String],
    x: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
) -> Result<CompositeModel> {
    let p = check_design(x, y)?;
    if names.len() != p {
        return Err(Error::InvalidInput(format!(
            "{} names for {p} features",
            names.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("lasso needs at least 2 rows".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "λ = {lambda} must be finite and >= 0"
        )));
    }
    let problem = Problem::new(rows(x, y), p);
    for name in names
        .iter()
        .zip(&problem.keep)
        .filter(|(_, k)| !**k)
        .map(|(n, _)| n)
    {
        log::warn!("dropping constant feature `{name}`");
    }
    let mut beta = vec![0.0; p];
    let sweeps = problem.solve(lambda, &mut beta);
    Ok(problem.model(names, beta, lambda, sweeps))
}

/// Smallest λ at which every coefficient is zero.
pub fn lambda_max(x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let p = check_design(x, y)?;
    Ok(Problem::new(rows(x, y), p).lambda_max())
}

/// `count` log-spaced values from λ_max down to λ_max · `ratio`.
pub fn lambda_grid(x: &[Vec<f64>], y: &[f64], count: usize, ratio: f64) -> Result<Vec<f64>> {
    if count == 0 || !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(
            "λ grid needs count >= 1 and ratio in (0, 1]".into(),
        ));
    }
    let top = lambda_max(x, y)?;
    if count == 1 {
        return Ok(vec![top]);
    }
    Ok((0..count)
        .map(|i| top * ratio.powf(i as f64 / (count - 1) as f64))
        .collect())
}

/// Grid value with the smallest mean leave-one-out squared error; ties go to
/// the larger λ.
pub fn loo_select_lambda(x: &[Vec<f64>], y: &[f64], grid: &[f64]) -> Result<f64> {
    let p = check_design(x, y)?;
    if x.len() < 3 {
        return Err(Error::InvalidInput(
            "leave-one-out needs at least 3 rows".into(),
        ));
    }
    if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::Config(
            "λ grid must be non-empty, finite and >= 0".into(),
        ));
    }
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    order.dedup();
    if order.len() == 1 {
        return Ok(order[0]);
    }
    let mut errors = vec![0.0; order.len()];
    for i in 0..x.len() {
        let rest = rows(x, y)
            .enumerate()
            .filter(move |(j, _)| *j != i)
            .map(|(_, r)| r);
        let problem = Problem::new(rest, p);
        // Warm starts down the path.
        let mut beta = vec![0.0; p];
        for (e, &lambda) in errors.iter_mut().zip(&order) {
            problem.solve(lambda, &mut beta);
            *e += (y[i] - problem.predict(&beta, &x[i])).powi(2);
        }
    }
    let mut best = 0;
    for (i, e) in errors.iter().enumerate() {
        if *e < errors[best] {
            best = i;
        }
    }
    Ok(order[best])
}
