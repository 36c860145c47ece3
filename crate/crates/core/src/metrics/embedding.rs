// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::corpus::ActivationRecord;
use crate::linalg::{cosine, mean, participation_ratio};

use super::{MetricsConfig, NullCause, Sink};

/// Normalizes a token string for lexicon lookup: strips byte-level and sentencepiece
/// space markers and surrounding whitespace, then lowercases.
pub fn normalize_token(tok: &str) -> String {
    tok.trim_matches(|c: char| c.is_whitespace() || c == 'Ġ' || c == '▁').to_lowercase()
}

/// Prompt positions whose normalized token string is in the lexicon.
pub fn selfref_positions(r: &ActivationRecord, lexicon: &[String]) -> Vec<usize> {
    r.token_strings
        .iter()
        .enumerate()
        .filter(|(_, t)| {
            let n = normalize_token(t);
            lexicon.contains(&n)
        })
        .map(|(i, _)| i)
        .collect()
}

fn argmax(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        // first index wins ties
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Deepest layer whose logit-lens top token matches the emitted first token, divided by `L`.
pub(crate) fn logit_lens_agreement_depth(r: &ActivationRecord) -> f64 {
    let target = argmax(r.first_token_logits.data.iter().map(|&x| x as f64));
    let u = &r.logit_lens_unembed;
    let v = u.dims[0];
    let l_max = r.layers();
    (0..=l_max)
        .rev()
        .find(|&l| {
            let h = r.last_token_hidden(l);
            let rms = (h.iter().map(|x| x * x).sum::<f64>() / h.len() as f64).sqrt();
            if rms == 0.0 {
                return false;
            }
            let scores = (0..v).map(|k| u.row(&[], k).iter().zip(&h).map(|(a, b)| a * b / rms).sum::<f64>());
            argmax(scores) == target
        })
        .map_or(0.0, |l| l as f64 / l_max as f64)
}

pub(crate) fn compute(r: &ActivationRecord, cfg: &MetricsConfig, sink: &mut Sink) {
    let sr = selfref_positions(r, &cfg.selfref_lexicon);
    let embed: Vec<Vec<f64>> = (0..r.tokens()).map(|t| r.hidden_states.row(&[0], t)).collect();
    sink.put("embed_selfref_count", Ok(sr.len() as f64));

    let pairwise = match sr.len() {
        0 => Err(NullCause::NoSelfRefTokens),
        1 => Err(NullCause::Degenerate("single self-referential token")),
        _ => {
            let mut cs = Vec::new();
            for (a, &i) in sr.iter().enumerate() {
                for &j in &sr[a + 1..] {
                    cs.push(cosine(&embed[i], &embed[j]));
                }
            }
            Ok(mean(&cs))
        }
    };
    sink.put("embed_selfref_pairwise_cos", pairwise);

    let others: Vec<usize> = (0..r.tokens()).filter(|t| !sr.contains(t)).collect();
    let cross = if sr.is_empty() {
        Err(NullCause::NoSelfRefTokens)
    } else if others.is_empty() {
        Err(NullCause::Degenerate("every token is self-referential"))
    } else {
        let cs: Vec<f64> = sr
            .iter()
            .flat_map(|&i| others.iter().map(move |&j| (i, j)))
            .map(|(i, j)| cosine(&embed[i], &embed[j]))
            .collect();
        Ok(mean(&cs))
    };
    sink.put("embed_selfref_cross_cos", cross);

    let t = r.tokens();
    let last = r.layers() - 1;
    let mass: Vec<f64> = (0..r.heads())
        .map(|h| {
            let row = &r.attention_probs.block(&[last, h])[(t - 1) * t..];
            sr.iter().map(|&k| row[k] as f64).sum()
        })
        .collect();
    sink.put("attn_to_selfref_mean", Ok(mean(&mass)));
    sink.put("attn_to_selfref_max", Ok(mass.iter().copied().fold(0.0, f64::max)));

    let logits = &r.first_token_logits.data;
    let (lt, lf) = (logits[r.true_token_index] as f64, logits[r.false_token_index] as f64);
    sink.put("ftl_true", Ok(lt));
    sink.put("ftl_false", Ok(lf));
    sink.put("ftl_tf_gap", Ok(lt - lf));

    let prs: Vec<f64> = (0..=r.layers()).filter_map(|l| participation_ratio(&r.last_token_hidden(l)).ok()).collect();
    sink.put(
        "hidden_pr_mean",
        if prs.is_empty() { Err(NullCause::Degenerate("all-zero hidden states")) } else { Ok(mean(&prs)) },
    );
    sink.put("logit_lens_agreement_depth", Ok(logit_lens_agreement_depth(r)));
}
