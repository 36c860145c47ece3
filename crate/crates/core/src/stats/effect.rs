// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::CounterRng;

use super::{bh_fdr, bonferroni, mean, sample_var, t_two_sided_p, StatsError};

pub const DEFAULT_BOOTSTRAP_ITERATIONS: usize = 5000;

/// Largest tolerated fraction of zero-variance bootstrap resamples.
const MAX_SKIPPED_FRACTION: f64 = 0.01;

fn check_len(xs: &[f64], needed: usize) -> Result<(), StatsError> {
    if xs.len() < needed {
        return Err(StatsError::TooFew { needed, got: xs.len() });
    }
    Ok(())
}

/// Standardized mean difference `(mean(a) - mean(b)) / s_pooled`.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check_len(a, 2)?;
    check_len(b, 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * sample_var(a) + (nb - 1.0) * sample_var(b)) / (na + nb - 2.0)).sqrt();
    if !(pooled > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    Ok((mean(a) - mean(b)) / pooled)
}

/// Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_p(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check_len(a, 2)?;
    check_len(b, 2)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_var(a) / na, sample_var(b) / nb);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(t_two_sided_p(t, df))
}

/// Sample quantile with linear interpolation between order statistics (type 7).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    /// Resamples dropped because both resampled groups were constant.
    pub skipped: usize,
}

/// 95% percentile bootstrap CI of Cohen's d.
pub fn bootstrap_ci(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<BootstrapCi, StatsError> {
    bootstrap_ci_with(a, b, iterations, seed, 0.95)
}

/// Percentile bootstrap CI of Cohen's d at the given coverage level.
///
/// Each iteration resamples both groups with replacement from its own counter stream,
/// so the interval does not depend on thread count.
pub fn bootstrap_ci_with(
    a: &[f64],
    b: &[f64],
    iterations: usize,
    seed: u64,
    level: f64,
) -> Result<BootstrapCi, StatsError> {
    check_len(a, 2)?;
    check_len(b, 2)?;
    if iterations < 2 {
        return Err(StatsError::TooFew { needed: 2, got: iterations });
    }
    let draws: Vec<Option<f64>> = (0..iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = CounterRng::new(seed, i as u64);
            let ra: Vec<f64> = (0..a.len()).map(|_| a[rng.below(a.len())]).collect();
            let rb: Vec<f64> = (0..b.len()).map(|_| b[rng.below(b.len())]).collect();
            cohens_d(&ra, &rb).ok()
        })
        .collect();
    let mut ds: Vec<f64> = draws.iter().flatten().copied().collect();
    let skipped = iterations - ds.len();
    if ds.len() < 2 || skipped as f64 > MAX_SKIPPED_FRACTION * iterations as f64 {
        return Err(StatsError::BootstrapDegenerate { skipped, iterations });
    }
    ds.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapCi { low: percentile(&ds, tail), high: percentile(&ds, 1.0 - tail), skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectResult {
    pub metric: String,
    pub comparison: String,
    pub n_a: usize,
    pub n_b: usize,
    pub d: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_raw: f64,
    pub p_bonf: f64,
    pub q_fdr: f64,
    pub significant: bool,
}

/// Effect size, bootstrap CI and Welch p for one metric-comparison cell.
///
/// Corrected p-values are filled in later by [`apply_corrections`]. The interval is
/// widened to contain the point estimate when resampling skew leaves it outside.
pub fn effect_cell(
    metric: &str,
    comparison: &str,
    a: &[f64],
    b: &[f64],
    iterations: usize,
    seed: u64,
) -> Result<EffectResult, StatsError> {
    let d = cohens_d(a, b)?;
    let ci = bootstrap_ci(a, b, iterations, seed)?;
    let p = welch_p(a, b)?;
    Ok(EffectResult {
        metric: metric.to_string(),
        comparison: comparison.to_string(),
        n_a: a.len(),
        n_b: b.len(),
        d,
        ci_low: ci.low.min(d),
        ci_high: ci.high.max(d),
        p_raw: p,
        p_bonf: p,
        q_fdr: p,
        significant: false,
    })
}

/// Which corrected quantity decides significance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Bonferroni,
    Fdr,
}

/// Fills `p_bonf` (with `m` tests), BH `q_fdr` across `results`, and `significant`
/// (`p_bonf < alpha` or `q_fdr < alpha`).
pub fn apply_corrections(results: &mut [EffectResult], m: usize, alpha: f64, criterion: Criterion) {
    let ps: Vec<f64> = results.iter().map(|r| r.p_raw).collect();
    let bh = bh_fdr(&ps, alpha);
    for (r, q) in results.iter_mut().zip(bh.qvalues) {
        r.p_bonf = bonferroni(r.p_raw, m);
        r.q_fdr = q;
        r.significant = match criterion {
            Criterion::Bonferroni => r.p_bonf < alpha,
            Criterion::Fdr => r.q_fdr < alpha,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn normals(n: usize, mu: f64, seed: u64) -> Vec<f64> {
        let mut r = CounterRng::new(seed, 99);
        (0..n).map(|_| mu + r.normal()).collect()
    }

    #[test]
    fn d_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(cohens_d(&a, &a).unwrap(), 0.0);
        assert_abs_diff_eq!(cohens_d(&a, &[3.0, 4.0, 5.0]).unwrap(), -2.0, epsilon = 1e-12);
        assert_eq!(cohens_d(&[2.0, 2.0], &[2.0, 2.0]), Err(StatsError::ZeroVariance));
        assert!(matches!(cohens_d(&[1.0], &a), Err(StatsError::TooFew { .. })));
    }

    #[test]
    fn welch_examples() {
        // t = -12.7279, df = 2; p = 1 - |t| / sqrt(t^2 + 2)
        let t: f64 = 9.0 / 0.5f64.sqrt();
        let want = 1.0 - t / (t * t + 2.0).sqrt();
        assert_abs_diff_eq!(welch_p(&[1.0, 2.0], &[10.0, 11.0]).unwrap(), want, epsilon = 1e-9);
        let a = normals(200, 0.0, 1);
        assert!(welch_p(&a, &a).unwrap() > 0.9);
        assert!(welch_p(&normals(100, 0.0, 2), &normals(100, 5.0, 3)).unwrap() < 1e-20);
        assert_eq!(welch_p(&[1.0, 1.0], &[2.0, 2.0]), Err(StatsError::ZeroVariance));
    }

    #[test]
    fn welch_unequal_variances_by_hand() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 6.0, 10.0];
        // va = 5/3 / 4, vb = 16 / 3
        let (va, vb): (f64, f64) = (5.0 / 12.0, 16.0 / 3.0);
        let t = (2.5 - 6.0) / (va + vb).sqrt();
        let df = (va + vb).powi(2) / (va * va / 3.0 + vb * vb / 2.0);
        assert_abs_diff_eq!(welch_p(&a, &b).unwrap(), t_two_sided_p(t, df), epsilon = 1e-15);
        assert!(df > 2.0 && df < 3.0);
    }

    #[test]
    fn percentile_type7() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&s, 0.0), 1.0);
        assert_eq!(percentile(&s, 1.0), 4.0);
        assert_abs_diff_eq!(percentile(&s, 0.5), 2.5);
        assert_abs_diff_eq!(percentile(&s, 0.25), 1.75);
    }

    #[test]
    fn bootstrap_null_and_determinism() {
        let a = normals(50, 0.0, 4);
        let ci = bootstrap_ci(&a, &a, 2000, 7).unwrap();
        assert!(ci.low < 0.0 && ci.high > 0.0);
        assert_eq!(ci, bootstrap_ci(&a, &a, 2000, 7).unwrap());
        assert_ne!(ci, bootstrap_ci(&a, &a, 2000, 8).unwrap());
    }

    #[test]
    fn bootstrap_independent_of_thread_count() {
        let a = normals(40, 0.0, 5);
        let b = normals(40, 1.0, 6);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| bootstrap_ci(&a, &b, 1000, 3).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn bootstrap_rejects_degenerate_resamples() {
        // n = 2 groups with one distinct pair: many resamples are constant
        let err = bootstrap_ci(&[0.0, 1.0], &[5.0, 6.0], 500, 1).unwrap_err();
        assert!(matches!(err, StatsError::BootstrapDegenerate { .. }));
    }

    #[test]
    fn effect_cell_contains_estimate() {
        let a = normals(30, 0.5, 9);
        let b = normals(30, 0.0, 10);
        let e = effect_cell("m", "x_vs_y", &a, &b, 1000, 1).unwrap();
        assert!(e.ci_low <= e.d && e.d <= e.ci_high);
        assert_eq!((e.n_a, e.n_b), (30, 30));
    }

    #[test]
    fn corrections() {
        let mk = |p| EffectResult {
            metric: String::new(),
            comparison: String::new(),
            n_a: 2,
            n_b: 2,
            d: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            p_raw: p,
            p_bonf: p,
            q_fdr: p,
            significant: false,
        };
        let mut rs: Vec<_> = [0.001, 0.02, 0.04].into_iter().map(mk).collect();
        apply_corrections(&mut rs, 13, 0.05, Criterion::Bonferroni);
        assert_abs_diff_eq!(rs[0].p_bonf, 0.013);
        assert_eq!(rs.iter().filter(|r| r.significant).count(), 1);
        apply_corrections(&mut rs, 3, 0.05, Criterion::Fdr);
        assert!(rs.iter().all(|r| r.significant));
    }

    proptest! {
        #[test]
        fn d_is_antisymmetric(a in prop::collection::vec(-1e3f64..1e3, 2..20), b in prop::collection::vec(-1e3f64..1e3, 2..20)) {
            if let Ok(d) = cohens_d(&a, &b) {
                prop_assert!((d + cohens_d(&b, &a).unwrap()).abs() <= 1e-9 * (1.0 + d.abs()));
            }
        }
    }
}
