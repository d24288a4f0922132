//! Statistics for relating intrinsic rewards to human ratings: correlation,
//! split-half reliability, lasso composites and split-based evaluation.

mod eval;
mod lasso;
mod ratings;

pub use eval::{
    complementarity, evaluate_splits, per_scenario_matrix, FeatureTable, ModelSpec, ScenarioMatrix,
    SignFlag, SplitScore, Splits,
};
pub use lasso::{lambda_grid, lambda_max, lasso_fit, loo_select_lambda, CompositeModel};
pub use ratings::{
    parse_ratings, spearman_brown, split_half_reliability, RatingDataset, Reliability,
    StimulusRatings,
};

use crate::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (divisor n − 1); 0 for fewer than two values.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Standard error of the mean.
pub fn sem(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    std_dev(x) / (x.len() as f64).sqrt()
}

/// Sample Pearson correlation. Constant input is an error, never 0 or NaN.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "correlation of vectors with lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InvalidInput(
            "correlation needs at least 3 points".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate(
            "correlation with a constant vector".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(pearson_r(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(pearson_r(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn spread_statistics() {
        assert_eq!(std_dev(&[1.0, 3.0]), 2f64.sqrt());
        assert_eq!(sem(&[1.0, 3.0]), 1.0);
        assert_eq!(sem(&[]), 0.0);
    }
}
