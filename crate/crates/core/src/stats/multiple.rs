// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BhResult {
    pub qvalues: Vec<f64>,
    pub rejected: Vec<bool>,
}

/// Benjamini-Hochberg step-up procedure. Panics on p-values outside `[0, 1]`.
pub fn bh_fdr(pvals: &[f64], q: f64) -> BhResult {
    assert!(pvals.iter().all(|p| (0.0..=1.0).contains(p)), "p-values must lie in [0, 1]");
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvals[i].total_cmp(&pvals[j]));

    let mut qvalues = vec![1.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(pvals[i] * m as f64 / (rank + 1) as f64);
        qvalues[i] = running.min(1.0);
    }
    let cutoff = order
        .iter()
        .enumerate()
        .rev()
        .find(|&(rank, &i)| pvals[i] <= (rank + 1) as f64 * q / m as f64)
        .map(|(rank, _)| rank + 1)
        .unwrap_or(0);
    let mut rejected = vec![false; m];
    for &i in &order[..cutoff] {
        rejected[i] = true;
    }
    BhResult { qvalues, rejected }
}

pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn bh_examples() {
        let r = bh_fdr(&[0.005, 0.01, 0.03, 0.04], 0.05);
        assert!(r.rejected.iter().all(|&x| x));
        for (q, want) in r.qvalues.iter().zip([0.02, 0.02, 0.04, 0.04]) {
            assert_abs_diff_eq!(*q, want, epsilon = 1e-12);
        }
        let r = bh_fdr(&[1.0; 5], 0.05);
        assert!(r.rejected.iter().all(|&x| !x));
        assert!(r.qvalues.iter().all(|&q| q == 1.0));
        assert_eq!(bh_fdr(&[0.04], 0.05).rejected, vec![true]);
        assert_eq!(bh_fdr(&[], 0.05).qvalues, Vec::<f64>::new());
    }

    #[test]
    fn bh_step_up_rejects_below_failing_ranks() {
        // p_(2) fails its own threshold but p_(3) passes, so all three are rejected
        let r = bh_fdr(&[0.01, 0.04, 0.045], 0.05);
        assert_eq!(r.rejected, vec![true, true, true]);
    }

    #[test]
    fn bonferroni_clips() {
        assert_abs_diff_eq!(bonferroni(0.001, 13), 0.013);
        assert_eq!(bonferroni(0.2, 13), 1.0);
    }

    proptest! {
        #[test]
        fn bh_monotone_and_consistent(ps in prop::collection::vec(0.0f64..=1.0, 1..60), q in 0.01f64..0.3) {
            let r = bh_fdr(&ps, q);
            let mut idx: Vec<usize> = (0..ps.len()).collect();
            idx.sort_by(|&i, &j| ps[i].total_cmp(&ps[j]));
            for w in idx.windows(2) {
                prop_assert!(r.qvalues[w[0]] <= r.qvalues[w[1]]);
            }
            for i in 0..ps.len() {
                prop_assert!(r.qvalues[i] >= ps[i] - 1e-15);
                // rejection sets agree with thresholding q-values
                prop_assert_eq!(r.rejected[i], r.qvalues[i] <= q * (1.0 + 1e-12));
                if r.rejected[i] {
                    for j in 0..ps.len() {
                        if ps[j] <= ps[i] {
                            prop_assert!(r.rejected[j]);
                        }
                    }
                }
            }
        }
    }
}
