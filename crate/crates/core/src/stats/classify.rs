// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::rng::CounterRng;

use super::{average_ranks, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub folds: usize,
    pub seed: u64,
    /// L2 penalty on standardized coefficients; the intercept is not penalized.
    pub lambda: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { folds: 5, seed: 42, lambda: 1.0, tolerance: 1e-8, max_iterations: 200 }
    }
}

/// Training-fold preprocessing parameters, one entry per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldParams {
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
    /// Population standard deviation across folds.
    pub std_auc: f64,
    /// Standardized coefficients averaged over folds; intercept excluded.
    pub coefficients: Vec<f64>,
    pub folds: Vec<FoldParams>,
    /// Fold index of every sample.
    pub assignment: Vec<usize>,
}

/// Stratified fold assignment: each class is shuffled from its own stream and dealt
/// round-robin, continuing the deal across classes so fold sizes stay balanced.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut fold = vec![0; y.len()];
    let mut next = 0;
    for (stream, label) in [false, true].into_iter().enumerate() {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
        CounterRng::new(seed, stream as u64).shuffle(&mut members);
        for i in members {
            fold[i] = next % k;
            next += 1;
        }
    }
    fold
}

/// Area under the ROC curve via the Mann-Whitney statistic, ties counted as one half.
pub fn auc(scores: &[f64], y: &[bool]) -> f64 {
    let ranks = average_ranks(scores);
    let n1 = y.iter().filter(|&&b| b).count() as f64;
    let n0 = y.len() as f64 - n1;
    let rank_sum: f64 = ranks.iter().zip(y).filter(|(_, &b)| b).map(|(r, _)| r).sum();
    (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0)
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Penalized logistic regression by Newton-Raphson (IRLS). Column 0 of `x` is the intercept.
fn fit_logistic(x: &DMatrix<f64>, y: &[bool], cfg: &ClassifierConfig) -> (DVector<f64>, usize, bool) {
    let (n, p) = x.shape();
    let yv = DVector::from_iterator(n, y.iter().map(|&b| f64::from(u8::from(b))));
    let mut penalty = DVector::from_element(p, cfg.lambda);
    penalty[0] = 0.0;
    let mut beta = DVector::zeros(p);
    for it in 0..cfg.max_iterations {
        let mu = (x * &beta).map(sigmoid);
        let grad = x.transpose() * (&mu - &yv) + penalty.component_mul(&beta);
        if grad.norm() <= cfg.tolerance {
            return (beta, it, true);
        }
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut hess = x.transpose() * xw;
        for j in 0..p {
            hess[(j, j)] += penalty[j];
        }
        let step = match hess.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => match hess.lu().solve(&grad) {
                Some(s) => s,
                None => return (beta, it, false),
            },
        };
        beta -= step;
    }
    let mu = (x * &beta).map(sigmoid);
    let grad = x.transpose() * (&mu - &yv) + penalty.component_mul(&beta);
    (beta, cfg.max_iterations, grad.norm() <= cfg.tolerance)
}

/// k-fold stratified cross-validated AUC of L2 logistic regression on nullable features.
/// `x` is row-per-sample; nulls are imputed with training-fold medians.
pub fn crossval_logistic_auc(
    x: &[Vec<Option<f64>>],
    y: &[bool],
    cfg: &ClassifierConfig,
) -> Result<ClassifierReport, StatsError> {
    let n = x.len();
    if y.len() != n {
        return Err(StatsError::LengthMismatch(format!("{n} rows, {} labels", y.len())));
    }
    let k = cfg.folds;
    for label in [false, true] {
        let count = y.iter().filter(|&&b| b == label).count();
        if count < k {
            return Err(StatsError::InsufficientClass { label, count, k });
        }
    }
    let p = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != p) {
        return Err(StatsError::LengthMismatch("ragged feature rows".into()));
    }
    let assignment = stratified_folds(y, k, cfg.seed);
    let mut fold_aucs = Vec::with_capacity(k);
    let mut folds = Vec::with_capacity(k);
    let mut coef_sum = vec![0.0; p];
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
        let ytest: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        if ytest.iter().all(|&b| b) || ytest.iter().all(|&b| !b) {
            return Err(StatsError::SingleClassFold(f));
        }
        let medians: Vec<f64> =
            (0..p).map(|j| median(train.iter().filter_map(|&i| x[i][j]).collect()).unwrap_or(0.0)).collect();
        let value = |i: usize, j: usize| x[i][j].unwrap_or(medians[j]);
        let means: Vec<f64> =
            (0..p).map(|j| train.iter().map(|&i| value(i, j)).sum::<f64>() / train.len() as f64).collect();
        let stds: Vec<f64> = (0..p)
            .map(|j| {
                let v = train.iter().map(|&i| (value(i, j) - means[j]).powi(2)).sum::<f64>() / train.len() as f64;
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let design = |rows: &[usize]| {
            DMatrix::from_fn(rows.len(), p + 1, |r, c| {
                if c == 0 {
                    1.0
                } else {
                    (value(rows[r], c - 1) - means[c - 1]) / stds[c - 1]
                }
            })
        };
        let ytrain: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let (beta, iterations, converged) = fit_logistic(&design(&train), &ytrain, cfg);
        let scores: Vec<f64> = (design(&test) * &beta).iter().copied().collect();
        fold_aucs.push(auc(&scores, &ytest));
        for j in 0..p {
            coef_sum[j] += beta[j + 1];
        }
        folds.push(FoldParams { medians, means, stds, iterations, converged });
    }
    let mean_auc = fold_aucs.iter().sum::<f64>() / k as f64;
    let std_auc = (fold_aucs.iter().map(|a| (a - mean_auc).powi(2)).sum::<f64>() / k as f64).sqrt();
    Ok(ClassifierReport {
        fold_aucs,
        mean_auc,
        std_auc,
        coefficients: coef_sum.iter().map(|c| c / k as f64).collect(),
        folds,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn clusters(n: usize, p: usize, informative: usize, shift: f64, seed: u64) -> (Vec<Vec<Option<f64>>>, Vec<bool>) {
        let mut r = CounterRng::new(seed, 0);
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let x = y
            .iter()
            .map(|&b| (0..p).map(|j| Some(r.normal() + if b && j < informative { shift } else { 0.0 })).collect())
            .collect();
        (x, y)
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]), 0.0);
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]), 0.5);
        // one discordant pair of four
        assert_abs_diff_eq!(auc(&[0.1, 0.6, 0.5, 0.9], &[false, false, true, true]), 0.75);
    }

    #[test]
    fn folds_are_stratified_and_balanced() {
        let y: Vec<bool> = (0..163).map(|i| i % 4 == 0).collect();
        let f = stratified_folds(&y, 5, 42);
        let pos = y.iter().filter(|&&b| b).count() as f64;
        for k in 0..5 {
            let members: Vec<usize> = (0..y.len()).filter(|&i| f[i] == k).collect();
            let p = members.iter().filter(|&&i| y[i]).count() as f64;
            assert!((p - pos / 5.0).abs() <= 1.0);
            assert!((members.len() as f64 - 163.0 / 5.0).abs() <= 1.0);
        }
        assert_eq!(f, stratified_folds(&y, 5, 42));
    }

    #[test]
    fn separable_clusters() {
        let (x, y) = clusters(200, 8, 8, 5.0, 1);
        let rep = crossval_logistic_auc(&x, &y, &ClassifierConfig::default()).unwrap();
        assert!(rep.mean_auc >= 0.99, "{}", rep.mean_auc);
        assert!(rep.folds.iter().all(|f| f.converged));
        assert!(rep.coefficients.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn shuffled_labels_near_chance() {
        let (x, mut y) = clusters(160, 106, 10, 2.0, 2);
        CounterRng::new(7, 0).shuffle(&mut y);
        let rep = crossval_logistic_auc(&x, &y, &ClassifierConfig::default()).unwrap();
        assert!((0.38..=0.62).contains(&rep.mean_auc), "{}", rep.mean_auc);
    }

    #[test]
    fn moderate_signal_regime() {
        let (x, y) = clusters(160, 106, 10, 2.0, 3);
        let rep = crossval_logistic_auc(&x, &y, &ClassifierConfig::default()).unwrap();
        assert!(rep.mean_auc >= 0.90, "{}", rep.mean_auc);
    }

    #[test]
    fn nulls_imputed_from_training_fold() {
        let (mut x, y) = clusters(60, 3, 1, 3.0, 4);
        for (i, row) in x.iter_mut().enumerate() {
            if i % 3 == 0 {
                row[2] = None;
            }
        }
        // a feature missing everywhere becomes a constant column
        for row in x.iter_mut() {
            row[1] = None;
        }
        let rep = crossval_logistic_auc(&x, &y, &ClassifierConfig::default()).unwrap();
        assert!(rep.mean_auc > 0.8);
        assert_eq!(rep.coefficients[1], 0.0);
    }

    #[test]
    fn too_few_members() {
        let x = vec![vec![Some(1.0)]; 8];
        let y = [true, true, true, false, false, false, false, false];
        assert!(matches!(
            crossval_logistic_auc(&x, &y, &ClassifierConfig::default()),
            Err(StatsError::InsufficientClass { label: true, count: 3, k: 5 })
        ));
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(scores in prop::collection::vec(-5.0f64..5.0, 6..40), seed in 0u64..100) {
            let mut r = CounterRng::new(seed, 0);
            let mut y: Vec<bool> = (0..scores.len()).map(|i| i % 2 == 0).collect();
            r.shuffle(&mut y);
            let a = auc(&scores, &y);
            let t: Vec<f64> = scores.iter().map(|s| (1.3 * s).exp() + 2.0).collect();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((a - auc(&t, &y)).abs() < 1e-12);
        }
    }
}
