// SPDX-License-Identifier: MIT OR Apache-2.0

//! CKA/layer-similarity and variance/distribution families.

use nalgebra::DMatrix;

use crate::corpus::ActivationRecord;
use crate::linalg::{cosine, excess_kurtosis, linear_cka, linear_slope, mean, population_std};

use super::{block_rank, tercile_bounds, BlockSpectra, NullCause, Sink};

/// Tercile-mean hidden-state matrices over layers `1..=L`.
fn tercile_representatives(r: &ActivationRecord) -> [DMatrix<f64>; 3] {
    tercile_bounds(r.layers()).map(|block| {
        let mut acc = DMatrix::zeros(r.tokens(), r.width());
        for l in block.clone() {
            acc += r.hidden(l + 1);
        }
        acc / block.len() as f64
    })
}

pub(crate) fn compute(r: &ActivationRecord, spectra: &BlockSpectra, sink: &mut Sink) {
    let [early, mid, late] = tercile_representatives(r);
    for (name, a, b) in
        [("cka_early_mid", &early, &mid), ("cka_early_late", &early, &late), ("cka_mid_late", &mid, &late)]
    {
        sink.put(name, linear_cka(a, b).map_err(NullCause::from));
    }

    let states: Vec<Vec<f64>> = (0..=r.layers()).map(|l| r.last_token_hidden(l)).collect();
    let sparsity: Vec<f64> = states
        .windows(2)
        .filter_map(|w| {
            let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
            let l2 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            (l2 > 0.0).then(|| d.iter().map(|x| x.abs()).sum::<f64>() / l2)
        })
        .collect();
    sink.put(
        "layer_delta_sparsity_mean",
        if sparsity.is_empty() { Err(NullCause::Degenerate("no layer update")) } else { Ok(mean(&sparsity)) },
    );

    let variances: Vec<f64> = states
        .iter()
        .map(|h| {
            let m = mean(h);
            h.iter().map(|x| (x - m).powi(2)).sum::<f64>() / h.len() as f64
        })
        .collect();
    sink.put("var_mean", Ok(mean(&variances)));
    sink.put("var_std", Ok(population_std(&variances)));
    sink.put("var_min", Ok(variances.iter().copied().fold(f64::INFINITY, f64::min)));
    sink.put("var_max", Ok(variances.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    sink.put("var_kurtosis", excess_kurtosis(&variances).ok_or(NullCause::Degenerate("constant variance sequence")));

    let cos: Vec<f64> = states.windows(2).map(|w| cosine(&w[0], &w[1])).collect();
    sink.put("cosine_mean", Ok(mean(&cos)));
    sink.put("cosine_min", Ok(cos.iter().copied().fold(f64::INFINITY, f64::min)));

    let combined: Vec<f64> =
        spectra.attn.iter().zip(&spectra.ffn).map(|(a, f)| (block_rank(a) + block_rank(f)) / 2.0).collect();
    let ffn: Vec<f64> = spectra.ffn.iter().map(|f| block_rank(f)).collect();
    sink.put("sv_eff_rank_std", Ok(population_std(&combined)));
    sink.put("sv_rank_trend", Ok(linear_slope(&combined)));
    sink.put("ffn_rank_trend", Ok(linear_slope(&ffn)));
}
