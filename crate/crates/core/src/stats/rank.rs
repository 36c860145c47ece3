// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::Serialize;

use super::{mean, normal_two_sided_p, t_two_sided_p, StatsError};

/// Largest sample size for which the signed-rank p-value is computed exactly.
pub const WILCOXON_EXACT_MAX: usize = 20;

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Wilcoxon {
    /// `min(W+, W-)`.
    pub w: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Nonzero differences used.
    pub n: usize,
    pub p: f64,
    pub exact: bool,
}

/// Ranks of nonzero `|diffs|` and their signs.
fn signed_ranks(diffs: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let ranks = average_ranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
    (ranks, nz.iter().map(|&d| d > 0.0).collect())
}

/// Exact null count: the number of the `2^n` sign assignments with `min(W+, W-) <= w`,
/// returned with `2^n`. Works on doubled ranks, which are integers even with ties.
pub fn wilcoxon_exact_count(ranks: &[f64], w: f64) -> (u64, u64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // ways[s] = number of subsets of ranks with doubled sum s
    let mut ways = vec![0u64; total + 1];
    ways[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            ways[s] += ways[s - r];
        }
    }
    let w2 = (2.0 * w).round() as usize;
    let hits = ways.iter().enumerate().filter(|&(s, _)| s.min(total - s) <= w2).map(|(_, c)| c).sum();
    (hits, 1u64 << ranks.len())
}

/// Wilcoxon signed-rank test on paired differences; zeros are dropped.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<Wilcoxon, StatsError> {
    let (ranks, positive) = signed_ranks(diffs);
    let n = ranks.len();
    if n == 0 {
        return Err(StatsError::AllZeroDiffs);
    }
    let w_plus: f64 = ranks.iter().zip(&positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let w_minus = n as f64 * (n as f64 + 1.0) / 2.0 - w_plus;
    let w = w_plus.min(w_minus);
    let (p, exact) = if n <= WILCOXON_EXACT_MAX {
        let (hits, all) = wilcoxon_exact_count(&ranks, w);
        (hits as f64 / all as f64, true)
    } else {
        let nf = n as f64;
        let mut ties = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
            let t = j as f64;
            ties += t * t * t - t;
            i += j;
        }
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
        (normal_two_sided_p(z), false)
    };
    Ok(Wilcoxon { w, w_plus, w_minus, n, p: p.min(1.0), exact })
}

/// Spearman rank correlation with the t-approximation p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(format!("{} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFew { needed: 3, got: n });
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let p = if rho.abs() == 1.0 {
        0.0
    } else {
        t_two_sided_p(rho * ((n as f64 - 2.0) / (1.0 - rho * rho)).sqrt(), n as f64 - 2.0)
    };
    Ok((rho, p))
}
