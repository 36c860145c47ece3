// SPDX-License-Identifier: MIT OR Apache-2.0

//! Static registry of the 106 canonical metrics.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Attention,
    Mortality,
    TruthSkolem,
    Spectral,
    Similarity,
    Embedding,
    Variance,
    Generation,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Attention,
        Family::Mortality,
        Family::TruthSkolem,
        Family::Spectral,
        Family::Similarity,
        Family::Embedding,
        Family::Variance,
        Family::Generation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Family::Attention => "attention",
            Family::Mortality => "mortality",
            Family::TruthSkolem => "truth_skolem",
            Family::Spectral => "spectral",
            Family::Similarity => "similarity",
            Family::Embedding => "embedding",
            Family::Variance => "variance",
            Family::Generation => "generation",
        }
    }

    /// Number of metrics registered under this family.
    pub fn size(self) -> usize {
        match self {
            Family::Attention => 24,
            Family::Mortality => 10,
            Family::TruthSkolem => 28,
            Family::Spectral => 6,
            Family::Similarity => 4,
            Family::Embedding => 10,
            Family::Variance => 10,
            Family::Generation => 14,
        }
    }
}

/// Record fields a metric may depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    HiddenStates,
    AttentionProbs,
    AttnOutputs,
    FfnOutputs,
    FirstTokenLogits,
    LogitLensUnembed,
    TokenStrings,
    ArHiddenNorms,
    PerStepLogprobs,
    StepTopkProbs,
    ResponseText,
    UnembedTruthDirs,
    LastTokenStates,
    ArTruthDelta,
    GradNorms,
    /// `jacobian_top_sv` when present, otherwise the hidden-state proxy.
    JacobianOrProxy,
}

impl Input {
    pub fn label(self) -> &'static str {
        match self {
            Input::HiddenStates => "hidden_states",
            Input::AttentionProbs => "attention_probs",
            Input::AttnOutputs => "attn_outputs",
            Input::FfnOutputs => "ffn_outputs",
            Input::FirstTokenLogits => "first_token_logits",
            Input::LogitLensUnembed => "logit_lens_unembed",
            Input::TokenStrings => "token_strings",
            Input::ArHiddenNorms => "ar_hidden_norms",
            Input::PerStepLogprobs => "per_step_logprobs",
            Input::StepTopkProbs => "step_topk_probs",
            Input::ResponseText => "response_text",
            Input::UnembedTruthDirs => "unembed_truth_dirs",
            Input::LastTokenStates => "last_token_states",
            Input::ArTruthDelta => "ar_truth_delta",
            Input::GradNorms => "grad_norms",
            Input::JacobianOrProxy => "jacobian_top_sv|hidden_states",
        }
    }
}

/// Layer tercile a statistic is aggregated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tercile {
    Early,
    Mid,
    Late,
    Mean,
}

impl Tercile {
    pub const ALL: [Tercile; 4] = [Tercile::Early, Tercile::Mid, Tercile::Late, Tercile::Mean];

    pub fn suffix(self) -> &'static str {
        match self {
            Tercile::Early => "early",
            Tercile::Mid => "mid",
            Tercile::Late => "late",
            Tercile::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricDef {
    pub name: &'static str,
    pub family: Family,
    pub formula: &'static str,
    pub inputs: &'static [Input],
    pub tercile: Option<Tercile>,
}

use Family as F;
use Input as I;

const ATTN_SV: &[Input] = &[I::AttnOutputs];
const ATTN_PROBS: &[Input] = &[I::AttentionProbs];
const HS: &[Input] = &[I::HiddenStates];
const AR_NORMS: &[Input] = &[I::ArHiddenNorms];
const TRUTH: &[Input] = &[I::HiddenStates, I::UnembedTruthDirs];
const TRUTH_LAST: &[Input] = &[I::UnembedTruthDirs, I::LastTokenStates];
const AR_TRUTH: &[Input] = &[I::ArTruthDelta];

macro_rules! terciles {
    ($stem:literal, $formula:literal, $inputs:expr) => {
        [
            MetricDef {
                name: concat!($stem, "_early"),
                family: F::Attention,
                formula: $formula,
                inputs: $inputs,
                tercile: Some(Tercile::Early),
            },
            MetricDef {
                name: concat!($stem, "_mid"),
                family: F::Attention,
                formula: $formula,
                inputs: $inputs,
                tercile: Some(Tercile::Mid),
            },
            MetricDef {
                name: concat!($stem, "_late"),
                family: F::Attention,
                formula: $formula,
                inputs: $inputs,
                tercile: Some(Tercile::Late),
            },
            MetricDef {
                name: concat!($stem, "_mean"),
                family: F::Attention,
                formula: $formula,
                inputs: $inputs,
                tercile: Some(Tercile::Mean),
            },
        ]
    };
}

const fn m(name: &'static str, family: Family, formula: &'static str, inputs: &'static [Input]) -> MetricDef {
    MetricDef { name, family, formula, inputs, tercile: None }
}

const ATTN_TERCILES: [[MetricDef; 4]; 5] = [
    terciles!("attn_eff_rank", "exp(H(sigma(A_l)))", ATTN_SV),
    terciles!("attn_entropy", "H(sigma(A_l) / sum sigma)", ATTN_SV),
    terciles!("attn_spectral_gap", "sigma_1 - sigma_2 of A_l", ATTN_SV),
    terciles!("attn_sv_conc", "sigma_1 / sum sigma of A_l", ATTN_SV),
    terciles!("attn_max_attn", "max over heads of the final query row's largest weight", ATTN_PROBS),
];

const REST: [MetricDef; 86] = [
    m("attn_matrix_semigroup_path_length", F::Attention, "sum_l |A_l - A_{l-1}|_F", ATTN_SV),
    m(
        "attn_dominant_fraction",
        F::Attention,
        "mean over layers of fraction of heads with final-row max weight > 0.5",
        ATTN_PROBS,
    ),
    m(
        "max_induction_score",
        F::Attention,
        "max over heads of mean attention to successors of earlier copies of the query token",
        &[I::AttentionProbs, I::TokenStrings],
    ),
    m("mean_attn_ffn_ratio", F::Attention, "mean_l |A_l|_F / |F_l|_F", &[I::AttnOutputs, I::FfnOutputs]),
    // mortality
    m("mortality_mean_contraction", F::Mortality, "mean_l |h_{l+1}| / |h_l|", HS),
    m("mortality_std_contraction", F::Mortality, "std_l |h_{l+1}| / |h_l|", HS),
    m("mortality_contractive_frac", F::Mortality, "fraction of ratios < 1 - eps_m", HS),
    m("mortality_expansive_frac", F::Mortality, "fraction of ratios > 1 + eps_m", HS),
    m("mortality_near_critical_frac", F::Mortality, "fraction of ratios with |r - 1| <= eps_m", HS),
    m("mortality_oscillation_count", F::Mortality, "sign changes of (r_l - 1)", HS),
    m("mortality_final_displacement", F::Mortality, "|h_L| / |h_0|", HS),
    m("ar_mortality_mean_contraction", F::Mortality, "mean_t n_{t+1} / n_t over generated-token norms", AR_NORMS),
    m("ar_mortality_oscillations", F::Mortality, "sign changes of (n_{t+1}/n_t - 1)", AR_NORMS),
    m("ar_mortality_final_displacement", F::Mortality, "n_G / n_1", AR_NORMS),
    // truth-delta and Skolem
    m("truth_delta_zero_crossings", F::TruthSkolem, "zero crossings of tau_l = <h_l, v_T - v_F>", TRUTH),
    m("truth_delta_range", F::TruthSkolem, "max tau - min tau", TRUTH),
    m("truth_delta_final", F::TruthSkolem, "tau_L", TRUTH),
    m(
        "truth_delta_last_token_zero_crossings",
        F::TruthSkolem,
        "zero crossings of tau at the final generated token",
        TRUTH_LAST,
    ),
    m("truth_delta_last_token_range", F::TruthSkolem, "range of tau at the final generated token", TRUTH_LAST),
    m("truth_delta_last_token_final", F::TruthSkolem, "tau_L at the final generated token", TRUTH_LAST),
    m("truth_total_winding_number", F::TruthSkolem, "sign reversals of the first difference of tau", TRUTH),
    m("skolem_zero_crossings", F::TruthSkolem, "zero crossings of the fitted AR(p) recurrence run forward", TRUTH),
    m("skolem_max_root_magnitude", F::TruthSkolem, "largest companion-root modulus", TRUTH),
    m("skolem_min_root_magnitude", F::TruthSkolem, "smallest companion-root modulus", TRUTH),
    m("skolem_amplitude_decay", F::TruthSkolem, "per-step log RMS change of the extrapolated recurrence", TRUTH),
    m("skolem_fit_error", F::TruthSkolem, "RMS one-step residual", TRUTH),
    m("skolem_lead_coefficient", F::TruthSkolem, "c_1", TRUTH),
    m("skolem_coefficient_norm", F::TruthSkolem, "|c|_2", TRUTH),
    m("skolem_final_sign", F::TruthSkolem, "sign of the last extrapolated value", TRUTH),
    m("skolem_unit_circle_roots", F::TruthSkolem, "roots with ||z| - 1| <= delta_unit", TRUTH),
    m(
        "last_token_skolem_zero_crossings",
        F::TruthSkolem,
        "skolem_zero_crossings at the final generated token",
        TRUTH_LAST,
    ),
    m(
        "last_token_skolem_max_root_magnitude",
        F::TruthSkolem,
        "skolem_max_root_magnitude at the final generated token",
        TRUTH_LAST,
    ),
    m(
        "last_token_skolem_amplitude_decay",
        F::TruthSkolem,
        "skolem_amplitude_decay at the final generated token",
        TRUTH_LAST,
    ),
    m("last_token_skolem_fit_error", F::TruthSkolem, "skolem_fit_error at the final generated token", TRUTH_LAST),
    m(
        "last_token_skolem_lead_coefficient",
        F::TruthSkolem,
        "skolem_lead_coefficient at the final generated token",
        TRUTH_LAST,
    ),
    m(
        "last_token_skolem_coefficient_norm",
        F::TruthSkolem,
        "skolem_coefficient_norm at the final generated token",
        TRUTH_LAST,
    ),
    m("last_token_skolem_final_sign", F::TruthSkolem, "skolem_final_sign at the final generated token", TRUTH_LAST),
    m(
        "last_token_skolem_unit_circle_roots",
        F::TruthSkolem,
        "skolem_unit_circle_roots at the final generated token",
        TRUTH_LAST,
    ),
    m("ar_skolem_zero_crossings", F::TruthSkolem, "skolem_zero_crossings over the generation trajectory", AR_TRUTH),
    m(
        "ar_skolem_max_root_magnitude",
        F::TruthSkolem,
        "skolem_max_root_magnitude over the generation trajectory",
        AR_TRUTH,
    ),
    m("ar_skolem_fit_error", F::TruthSkolem, "skolem_fit_error over the generation trajectory", AR_TRUTH),
    m(
        "ar_skolem_unit_circle_roots",
        F::TruthSkolem,
        "skolem_unit_circle_roots over the generation trajectory",
        AR_TRUTH,
    ),
    // spectral / Lyapunov
    m("spectral_lyapunov_exponent", F::Spectral, "(1/L) sum_l log sigma_1(J_l)", &[I::JacobianOrProxy]),
    m("spectral_growth", F::Spectral, "sum_l log sigma_1(J_l)", &[I::JacobianOrProxy]),
    m("spectral_distance_to_criticality", F::Spectral, "|lambda|", &[I::JacobianOrProxy]),
    m(
        "spectral_critical_fraction",
        F::Spectral,
        "fraction of layers with |log sigma_1| <= eps_c",
        &[I::JacobianOrProxy],
    ),
    m("spectral_max_log_sv", F::Spectral, "max_l log sigma_1(J_l)", &[I::JacobianOrProxy]),
    m("spectral_std_log_sv", F::Spectral, "std_l log sigma_1(J_l)", &[I::JacobianOrProxy]),
    // CKA and layer similarity
    m("cka_early_mid", F::Similarity, "linear CKA of tercile-mean hidden matrices", HS),
    m("cka_early_late", F::Similarity, "linear CKA of tercile-mean hidden matrices", HS),
    m("cka_mid_late", F::Similarity, "linear CKA of tercile-mean hidden matrices", HS),
    m("layer_delta_sparsity_mean", F::Similarity, "mean_l |h_{l+1} - h_l|_1 / |h_{l+1} - h_l|_2", HS),
    // embedding and self-reference
    m("embed_selfref_count", F::Embedding, "number of self-referential token positions", &[I::TokenStrings]),
    m(
        "embed_selfref_pairwise_cos",
        F::Embedding,
        "mean pairwise cosine among self-ref embeddings",
        &[I::TokenStrings, I::HiddenStates],
    ),
    m(
        "embed_selfref_cross_cos",
        F::Embedding,
        "mean cosine between self-ref and other embeddings",
        &[I::TokenStrings, I::HiddenStates],
    ),
    m(
        "attn_to_selfref_mean",
        F::Embedding,
        "head-mean final-row attention mass on self-ref positions, last layer",
        &[I::TokenStrings, I::AttentionProbs],
    ),
    m(
        "attn_to_selfref_max",
        F::Embedding,
        "max-head final-row attention mass on self-ref positions, last layer",
        &[I::TokenStrings, I::AttentionProbs],
    ),
    m("ftl_true", F::Embedding, "first-token logit of True", &[I::FirstTokenLogits]),
    m("ftl_false", F::Embedding, "first-token logit of False", &[I::FirstTokenLogits]),
    m("ftl_tf_gap", F::Embedding, "ftl_true - ftl_false", &[I::FirstTokenLogits]),
    m("hidden_pr_mean", F::Embedding, "mean_l participation ratio of last-token h_l", HS),
    m(
        "logit_lens_agreement_depth",
        F::Embedding,
        "deepest l whose lens argmax equals the emitted first token, divided by L",
        &[I::HiddenStates, I::LogitLensUnembed, I::FirstTokenLogits],
    ),
    // variance and distribution
    m("var_mean", F::Variance, "mean of per-layer activation variance", HS),
    m("var_std", F::Variance, "std of per-layer activation variance", HS),
    m("var_min", F::Variance, "min of per-layer activation variance", HS),
    m("var_max", F::Variance, "max of per-layer activation variance", HS),
    m("var_kurtosis", F::Variance, "excess kurtosis of per-layer activation variance", HS),
    m("cosine_mean", F::Variance, "mean cosine of consecutive last-token states", HS),
    m("cosine_min", F::Variance, "min cosine of consecutive last-token states", HS),
    m(
        "sv_eff_rank_std",
        F::Variance,
        "std over layers of mean(effrank(A_l), effrank(F_l))",
        &[I::AttnOutputs, I::FfnOutputs],
    ),
    m("sv_rank_trend", F::Variance, "slope of mean(effrank(A_l), effrank(F_l)) vs l", &[I::AttnOutputs, I::FfnOutputs]),
    m("ffn_rank_trend", F::Variance, "slope of effrank(F_l) vs l", &[I::FfnOutputs]),
    // generation and response
    m("cum_transform_eff_rank", F::Generation, "effective rank of least-squares map H_0 -> H_L", HS),
    m("cum_transform_rank_change", F::Generation, "mean |e_l - e_{l-1}| for maps H_0 -> H_l", HS),
    m(
        "sv_mean_eff_rank",
        F::Generation,
        "mean effective rank over all per-layer block-output SVDs",
        &[I::AttnOutputs, I::FfnOutputs],
    ),
    m("grad_norm_mean", F::Generation, "mean per-layer gradient norm", &[I::GradNorms]),
    m("grad_norm_max", F::Generation, "max per-layer gradient norm", &[I::GradNorms]),
    m("grad_norm_ratio", F::Generation, "last-layer / first-layer gradient norm", &[I::GradNorms]),
    m("avg_logprob", F::Generation, "mean per-step log-probability", &[I::PerStepLogprobs]),
    m("perplexity", F::Generation, "exp(-avg_logprob)", &[I::PerStepLogprobs]),
    m("prob_entropy", F::Generation, "mean entropy of top-k distribution plus residual bucket", &[I::StepTopkProbs]),
    m("prob_top1", F::Generation, "mean top-1 probability", &[I::StepTopkProbs]),
    m("prob_top5", F::Generation, "mean top-5 mass", &[I::StepTopkProbs]),
    m("resp_contradiction", F::Generation, "affirmative and negative markers co-occur (0/1)", &[I::ResponseText]),
    m("resp_hedging_count", F::Generation, "hedging marker matches", &[I::ResponseText]),
    m("resp_explanation_length", F::Generation, "whitespace token count of the response", &[I::ResponseText]),
];

/// Number of canonical metrics.
pub const METRIC_COUNT: usize = 106;

/// Canonical registry order: attention terciles, then the remaining metrics by family.
pub fn registry() -> &'static [MetricDef] {
    static REGISTRY: std::sync::OnceLock<Vec<MetricDef>> = std::sync::OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut all: Vec<MetricDef> = ATTN_TERCILES.iter().flatten().cloned().collect();
        all.extend(REST.iter().cloned());
        all
    })
}

pub fn metric_names() -> impl Iterator<Item = &'static str> {
    registry().iter().map(|d| d.name)
}

pub fn index_of(name: &str) -> Option<usize> {
    static INDEX: std::sync::OnceLock<std::collections::HashMap<&'static str, usize>> = std::sync::OnceLock::new();
    INDEX.get_or_init(|| registry().iter().enumerate().map(|(i, d)| (d.name, i)).collect()).get(name).copied()
}

pub fn lookup(name: &str) -> Option<&'static MetricDef> {
    index_of(name).map(|i| &registry()[i])
}

/// Splits layers `0..n` into three contiguous blocks whose sizes differ by at most one.
/// With fewer than three layers a block reuses the nearest layer.
pub fn tercile_bounds(n: usize) -> [std::ops::Range<usize>; 3] {
    assert!(n > 0);
    let cut = |k: usize| k * n / 3;
    let mut out = [cut(0)..cut(1), cut(1)..cut(2), cut(2)..cut(3)];
    for (k, r) in out.iter_mut().enumerate() {
        if r.start == r.end {
            let i = (k * n / 3).min(n - 1);
            *r = i..i + 1;
        }
    }
    out
}

/// Aggregates a per-layer sequence into (early, mid, late, mean) tercile means.
pub fn tercile_means(values: &[f64]) -> [f64; 4] {
    let b = tercile_bounds(values.len());
    let avg = |r: std::ops::Range<usize>| values[r.clone()].iter().sum::<f64>() / r.len() as f64;
    [avg(b[0].clone()), avg(b[1].clone()), avg(b[2].clone()), avg(0..values.len())]
}
