// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::corpus::ActivationRecord;
use crate::linalg::{effective_rank, mean, transition_operator};
use crate::response::classify_response_with;

use super::{block_rank, BlockSpectra, MetricsConfig, NullCause, Sink};

fn cumulative_rank(r: &ActivationRecord, layer: usize) -> Result<f64, NullCause> {
    let fit = transition_operator(&r.hidden(0), &r.hidden(layer))?;
    Ok(effective_rank(&fit.singular_values).unwrap_or(0.0))
}

pub(crate) fn compute(r: &ActivationRecord, cfg: &MetricsConfig, spectra: &BlockSpectra, sink: &mut Sink) {
    let l = r.layers();
    let ranks: Result<Vec<f64>, NullCause> = (0..=l).map(|k| cumulative_rank(r, k)).collect();
    match ranks {
        Ok(e) => {
            sink.put("cum_transform_eff_rank", Ok(e[l]));
            let change = e.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / l as f64;
            sink.put("cum_transform_rank_change", Ok(change));
        }
        Err(c) => sink.null_all(&["cum_transform_eff_rank", "cum_transform_rank_change"], c),
    }

    let all: Vec<f64> = spectra.attn.iter().chain(&spectra.ffn).map(|s| block_rank(s)).collect();
    sink.put("sv_mean_eff_rank", Ok(mean(&all)));

    const GRAD: [&str; 3] = ["grad_norm_mean", "grad_norm_max", "grad_norm_ratio"];
    match &r.grad_norms {
        Some(g) => {
            let g = g.to_f64();
            sink.put(GRAD[0], Ok(mean(&g)));
            sink.put(GRAD[1], Ok(g.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
            sink.put(
                GRAD[2],
                if g[0] > 0.0 {
                    Ok(g[g.len() - 1] / g[0])
                } else {
                    Err(NullCause::Degenerate("zero first-layer gradient"))
                },
            );
        }
        None => sink.null_all(&GRAD, NullCause::MissingInput("grad_norms")),
    }

    let lp = r.per_step_logprobs.to_f64();
    if lp.is_empty() {
        sink.null_all(&["avg_logprob", "perplexity"], NullCause::TooShort("no generated tokens"));
    } else {
        let avg = mean(&lp);
        sink.put("avg_logprob", Ok(avg));
        sink.put("perplexity", Ok((-avg).exp()));
    }

    let g = r.generated();
    if g == 0 {
        sink.null_all(&["prob_entropy", "prob_top1", "prob_top5"], NullCause::TooShort("no generated tokens"));
    } else {
        let (mut ent, mut top1, mut top5) = (0.0, 0.0, 0.0);
        for step in 0..g {
            let p = r.step_topk_probs.row(&[], step);
            let residual = (1.0 - p.iter().sum::<f64>()).max(0.0);
            ent += p.iter().chain(std::iter::once(&residual)).filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum::<f64>();
            top1 += p[0];
            top5 += p[..5].iter().sum::<f64>();
        }
        let n = g as f64;
        sink.put("prob_entropy", Ok(ent / n));
        sink.put("prob_top1", Ok(top1 / n));
        sink.put("prob_top5", Ok(top5 / n));
    }

    let flags = classify_response_with(&r.meta.response_text, &cfg.markers);
    sink.put("resp_contradiction", Ok(if flags.contradiction { 1.0 } else { 0.0 }));
    sink.put("resp_hedging_count", Ok(flags.hedging_count as f64));
    sink.put("resp_explanation_length", Ok(flags.explanation_length as f64));
}
