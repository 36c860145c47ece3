// SPDX-License-Identifier: MIT OR Apache-2.0

//! Effect sizes, resampling, rank tests, multiplicity control, covariate adjustment
//! and cross-validated classification.

mod ancova;
mod classify;
mod effect;
mod multiple;
mod rank;

pub use ancova::{ancova_group_p, AncovaFit};
pub use classify::{auc, crossval_logistic_auc, stratified_folds, ClassifierConfig, ClassifierReport, FoldParams};
pub use effect::{
    apply_corrections, bootstrap_ci, bootstrap_ci_with, cohens_d, effect_cell, percentile, welch_p, BootstrapCi,
    Criterion, EffectResult, DEFAULT_BOOTSTRAP_ITERATIONS,
};
pub use multiple::{bh_fdr, bonferroni, BhResult};
pub use rank::{average_ranks, spearman, wilcoxon_exact_count, wilcoxon_signed_rank, Wilcoxon, WILCOXON_EXACT_MAX};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("zero variance")]
    ZeroVariance,
    #[error("all differences are zero")]
    AllZeroDiffs,
    #[error("constant input")]
    ConstantInput,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("{skipped} of {iterations} bootstrap resamples had zero variance")]
    BootstrapDegenerate { skipped: usize, iterations: usize },
    #[error("class {label} has {count} members, fewer than {k} folds")]
    InsufficientClass { label: bool, count: usize, k: usize },
    #[error("fold {0} holds a single class")]
    SingleClassFold(usize),
}

/// Two-sided p-value for a t statistic with `df` degrees of freedom.
///
/// Uses the regularized incomplete beta form so tiny p-values keep relative precision.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || !(df > 0.0) {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    statrs::function::beta::beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Two-sided p-value of a standard normal deviate.
pub fn normal_two_sided_p(z: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * n.sf(z.abs())).min(1.0)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn t_p_matches_closed_forms() {
        // df = 1 is Cauchy: p = 1 - 2 atan(|t|) / pi
        for t in [0.1, 1.0, 3.0, 50.0] {
            let want = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert_relative_eq!(t_two_sided_p(t, 1.0), want, max_relative = 1e-10);
        }
        // df = 2: p = 1 - |t| / sqrt(t^2 + 2)
        for t in [0.5f64, 2.0, 12.0] {
            let want = 1.0 - t / (t * t + 2.0).sqrt();
            assert_relative_eq!(t_two_sided_p(t, 2.0), want, max_relative = 1e-9);
        }
        assert_eq!(t_two_sided_p(0.0, 10.0), 1.0);
    }

    #[test]
    fn t_p_keeps_tail_precision() {
        // large df approaches the normal tail
        let p = t_two_sided_p(12.0, 1e7);
        let z = normal_two_sided_p(12.0);
        assert!(p > 0.0 && p < 1e-30);
        assert_relative_eq!(p, z, max_relative = 1e-3);
    }
}
