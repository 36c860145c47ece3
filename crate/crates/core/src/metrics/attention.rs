// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::corpus::ActivationRecord;
use crate::linalg::spectral_entropy;

use super::{block_rank, tercile_means, BlockSpectra, NullCause, Sink};

pub(crate) fn compute(r: &ActivationRecord, spectra: &BlockSpectra, sink: &mut Sink) {
    let sv = &spectra.attn;
    let per_layer = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> { sv.iter().map(|s| f(s)).collect() };

    let rank = per_layer(&|s| block_rank(s));
    let entropy = per_layer(&|s| spectral_entropy(s).unwrap_or(0.0));
    let gap = per_layer(&|s| match s {
        [] => 0.0,
        [a] => *a,
        [a, b, ..] => a - b,
    });
    let conc = per_layer(&|s| {
        let total: f64 = s.iter().sum();
        if total > 0.0 {
            s[0] / total
        } else {
            0.0
        }
    });
    let max_attn = final_row_max(r).iter().map(|heads| heads.iter().fold(0.0f64, |m, &x| m.max(x))).collect::<Vec<_>>();

    put_terciles(sink, ["attn_eff_rank_early", "attn_eff_rank_mid", "attn_eff_rank_late", "attn_eff_rank_mean"], &rank);
    put_terciles(sink, ["attn_entropy_early", "attn_entropy_mid", "attn_entropy_late", "attn_entropy_mean"], &entropy);
    put_terciles(
        sink,
        ["attn_spectral_gap_early", "attn_spectral_gap_mid", "attn_spectral_gap_late", "attn_spectral_gap_mean"],
        &gap,
    );
    put_terciles(sink, ["attn_sv_conc_early", "attn_sv_conc_mid", "attn_sv_conc_late", "attn_sv_conc_mean"], &conc);
    put_terciles(
        sink,
        ["attn_max_attn_early", "attn_max_attn_mid", "attn_max_attn_late", "attn_max_attn_mean"],
        &max_attn,
    );

    let path: f64 = (1..r.layers()).map(|l| (r.attn_output(l) - r.attn_output(l - 1)).norm()).sum();
    sink.put("attn_matrix_semigroup_path_length", Ok(path));

    let dominant: Vec<f64> = final_row_max(r)
        .iter()
        .map(|heads| heads.iter().filter(|&&m| m > 0.5).count() as f64 / heads.len() as f64)
        .collect();
    sink.put("attn_dominant_fraction", Ok(dominant.iter().sum::<f64>() / dominant.len() as f64));

    sink.put("max_induction_score", Ok(max_induction_score(r)));

    let ratios: Vec<f64> = (0..r.layers())
        .filter_map(|l| {
            let f = r.ffn_output(l).norm();
            (f > 0.0).then(|| r.attn_output(l).norm() / f)
        })
        .collect();
    sink.put(
        "mean_attn_ffn_ratio",
        if ratios.is_empty() {
            Err(NullCause::Degenerate("all FFN outputs are zero"))
        } else {
            Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
        },
    );
}

fn put_terciles(sink: &mut Sink, names: [&'static str; 4], per_layer: &[f64]) {
    for (name, v) in names.into_iter().zip(tercile_means(per_layer)) {
        sink.put(name, Ok(v));
    }
}

/// For each layer, the largest weight in the final query row of every head.
fn final_row_max(r: &ActivationRecord) -> Vec<Vec<f64>> {
    let t = r.tokens();
    (0..r.layers())
        .map(|l| {
            (0..r.heads())
                .map(|h| {
                    let w = r.attention_probs.block(&[l, h]);
                    w[(t - 1) * t..].iter().fold(0.0f64, |m, &x| m.max(x as f64))
                })
                .collect()
        })
        .collect()
}

/// Largest per-head induction score over all layers and heads.
///
/// A head's score is the mean, over positions whose token string occurred earlier,
/// of the weight placed on the position right after the most recent earlier copy.
pub(crate) fn max_induction_score(r: &ActivationRecord) -> f64 {
    let t = r.tokens();
    let targets: Vec<(usize, usize)> = (1..t)
        .filter_map(|q| (0..q).rev().find(|&j| r.token_strings[j] == r.token_strings[q]).map(|j| (q, j + 1)))
        .collect();
    if targets.is_empty() {
        return 0.0;
    }
    let mut best = 0.0f64;
    for l in 0..r.layers() {
        for h in 0..r.heads() {
            let w = r.attention_probs.block(&[l, h]);
            let score = targets.iter().map(|&(q, k)| w[q * t + k] as f64).sum::<f64>() / targets.len() as f64;
            best = best.max(score);
        }
    }
    best
}
