// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic activation corpora with injectable cluster contrasts.
//!
//! Block outputs follow `H_{l+1} = H_l + A_l + F_l`. The singular spectrum of `A_l`
//! decays as `exp(-gamma k)` with `gamma = gamma_0 exp(-kappa z_l)`, where
//! `z_l = offset_c + sqrt(rho) u + sqrt(1 - rho) e_l` mixes a per-record factor `u`
//! and per-layer noise `e_l`. Offsets are in units of the per-layer latent SD, so
//! a `+2` offset raises attention effective rank by roughly two SDs at every layer.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_manifest, write_record, ActivationRecord, Cluster, CorpusError, CorpusManifest, Group, PromptMeta,
    RecordShape, Tensor,
};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    /// Records per cluster C1-C4.
    pub per_cluster: usize,
    /// Minimal pairs (one abl-sr and one abl-ctrl record each).
    pub pairs: usize,
    /// Records of the nonsense group, outside the four clusters.
    pub nonsense: usize,
    /// Latent offset per cluster label (C1..C4, NONE), in per-layer SD units.
    pub offsets: BTreeMap<String, f64>,
    /// Probability of a contradictory response per cluster label; `default_contradiction` otherwise.
    pub contradiction: BTreeMap<String, f64>,
    pub default_contradiction: f64,
    /// Share of latent variance common to all layers of a record.
    pub layer_correlation: f64,
    pub layers: usize,
    /// Mean prompt length; each record draws uniformly from `tokens +- token_jitter`.
    pub tokens: usize,
    pub token_jitter: usize,
    pub width: usize,
    pub heads: usize,
    pub vocab: usize,
    pub generated: usize,
    /// Write records without truth directions and gradient norms, like a model too large
    /// for the gradient and unembedding passes.
    pub large_model_style: bool,
    pub with_jacobian: bool,
    pub model_id: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            per_cluster: 40,
            pairs: 30,
            nonsense: 20,
            offsets: BTreeMap::new(),
            contradiction: BTreeMap::new(),
            default_contradiction: 0.15,
            layer_correlation: 0.2,
            layers: 12,
            tokens: 12,
            token_jitter: 2,
            width: 32,
            heads: 4,
            vocab: 8,
            generated: 16,
            large_model_style: false,
            with_jacobian: true,
            model_id: "synthetic-12l".into(),
        }
    }
}

impl SynthSpec {
    /// Null corpus with no cluster contrasts.
    pub fn null() -> Self {
        Self::default()
    }

    /// Attention-rank elevation of `+2` SD for C4 and `+1` SD for C3.
    pub fn signal() -> Self {
        let mut s = Self::default();
        s.offsets.insert("C4".into(), 2.0);
        s.offsets.insert("C3".into(), 1.0);
        s.contradiction.insert("C4".into(), 0.5);
        s
    }

    fn offset(&self, c: Cluster) -> f64 {
        self.offsets.get(c.label()).copied().unwrap_or(0.0)
    }

    fn contradiction_rate(&self, c: Cluster) -> f64 {
        self.contradiction.get(c.label()).copied().unwrap_or(self.default_contradiction)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        for key in self.offsets.keys().chain(self.contradiction.keys()) {
            if Cluster::from_label(key).is_none() {
                return Err(SpecError::UnknownCluster(key.clone()));
            }
        }
        let p = std::iter::once(self.default_contradiction).chain(self.contradiction.values().copied());
        if p.into_iter().any(|x| !(0.0..=1.0).contains(&x)) {
            return Err(SpecError::Invalid("contradiction probabilities must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.layer_correlation) {
            return Err(SpecError::Invalid("layer_correlation must lie in [0, 1]"));
        }
        if self.layers < 2 || self.tokens < self.token_jitter + 2 || self.width < 2 || self.heads == 0 || self.vocab < 2
        {
            return Err(SpecError::Invalid("dimensions too small"));
        }
        if self.per_cluster < 2 {
            return Err(SpecError::Invalid("per_cluster must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("unknown cluster label {0:?}")]
    UnknownCluster(String),
    #[error("invalid synthetic spec: {0}")]
    Invalid(&'static str),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest: CorpusManifest,
    pub records: Vec<ActivationRecord>,
}

const WORDS: [&str; 16] = [
    "the",
    "sentence",
    "is",
    "false",
    "this",
    "true",
    "statement",
    "itself",
    "paris",
    "capital",
    "of",
    "a",
    "here",
    "claim",
    "not",
    "me",
];

const AFFIRM: [&str; 3] = ["Yes, the statement is true.", "That is correct.", "It is true as written."];
const DENY: [&str; 3] = ["No, the statement is false.", "That is incorrect.", "It is not true."];
const CONTRA: [&str; 3] = [
    "It is true, but it is also not true.",
    "Yes. On reflection the statement is false, so it is true again.",
    "The claim is correct and incorrect at once; it cannot be determined.",
];

fn cluster_groups(c: Cluster) -> &'static [Group] {
    match c {
        Cluster::C1 => &[Group::Control, Group::Presupposition],
        Cluster::C2 => &[Group::GroundedSr, Group::MetaLlm],
        Cluster::C3 => &[Group::ComplexNonref, Group::FixedPoint],
        Cluster::C4 => &[Group::Paradox, Group::Goedelian, Group::MutualCyclic, Group::InfiniteRegress],
        Cluster::None => &[Group::Nonsense],
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut CounterRng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.normal())
}

/// `rows x k` matrix with orthonormal columns.
fn orthonormal(rows: usize, k: usize, rng: &mut CounterRng) -> DMatrix<f64> {
    gaussian_matrix(rows, k, rng).qr().q().columns(0, k).into_owned()
}

fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn tensor3(mats: &[DMatrix<f64>]) -> Tensor {
    Tensor::stack(&mats.iter().map(Tensor::from_matrix).collect::<Vec<_>>())
}

struct Slot {
    meta: PromptMeta,
    cluster: Cluster,
}

fn slots(spec: &SynthSpec) -> Vec<Slot> {
    let mut out = Vec::new();
    for c in [Cluster::C1, Cluster::C2, Cluster::C3, Cluster::C4] {
        let groups = cluster_groups(c);
        for i in 0..spec.per_cluster {
            let group = groups[i % groups.len()];
            out.push(Slot {
                meta: meta(spec, format!("syn-{}-{i:03}", c.label().to_lowercase()), group, None),
                cluster: c,
            });
        }
    }
    for i in 0..spec.nonsense {
        let id = format!("syn-nonsense-{i:03}");
        out.push(Slot { meta: meta(spec, id, Group::Nonsense, None), cluster: Cluster::None });
    }
    for i in 0..spec.pairs {
        let pair = format!("pair-{i:03}");
        for group in [Group::AblSr, Group::AblCtrl] {
            let id = format!("syn-{}-{i:03}", group.label());
            out.push(Slot { meta: meta(spec, id, group, Some(pair.clone())), cluster: Cluster::None });
        }
    }
    out
}

fn meta(spec: &SynthSpec, prompt_id: String, group: Group, pair_id: Option<String>) -> PromptMeta {
    PromptMeta {
        prompt_id,
        text: format!("synthetic {} prompt", group.label()),
        level: group.level(),
        group,
        cluster: group.cluster(),
        temperature: 0.0,
        model_id: spec.model_id.clone(),
        pair_id,
        response_text: String::new(),
        prompt_token_count: spec.tokens,
        response_token_count: spec.generated,
    }
}

fn synthesize(spec: &SynthSpec, slot: &Slot, seed: u64, index: u64) -> ActivationRecord {
    let (l, d, h, v, g) = (spec.layers, spec.width, spec.heads, spec.vocab, spec.generated);
    let root = CounterRng::new(seed, index);
    let mut rng = root.substream(0);
    let mut meta = slot.meta.clone();
    let t = spec.tokens - spec.token_jitter + rng.below(2 * spec.token_jitter + 1);
    meta.prompt_token_count = t;

    let p_contra = spec.contradiction_rate(slot.cluster);
    let pick = |rng: &mut CounterRng, xs: &[&str; 3]| xs[rng.below(3)].to_string();
    meta.response_text = if rng.bernoulli(p_contra) {
        pick(&mut rng, &CONTRA)
    } else if rng.bernoulli(0.5) {
        pick(&mut rng, &AFFIRM)
    } else {
        pick(&mut rng, &DENY)
    };

    let mut rec = ActivationRecord::blank(meta, RecordShape { layers: l, width: d, heads: h, vocab: v, topk: 16 });
    rec.token_strings = (0..t).map(|_| format!("Ġ{}", WORDS[rng.below(WORDS.len())])).collect();

    // latent attention-rank factor per layer
    let rho = spec.layer_correlation;
    let u = rng.normal();
    let offset = spec.offset(slot.cluster);
    let k = t.min(d);
    let mut arng = root.substream(1);
    let attn: Vec<DMatrix<f64>> = (0..l)
        .map(|_| {
            let z = offset + rho.sqrt() * u + (1.0 - rho).sqrt() * arng.normal();
            let gamma = 0.4 * (-0.3 * z).exp();
            let sv: Vec<f64> = (0..k).map(|i| (-gamma * i as f64).exp()).collect();
            let norm = sv.iter().map(|s| s * s).sum::<f64>().sqrt();
            let left = orthonormal(t, k, &mut arng);
            let right = orthonormal(d, k, &mut arng);
            let mut core = left;
            for (j, s) in sv.iter().enumerate() {
                core.column_mut(j).scale_mut(0.5 * t as f64 * s / norm);
            }
            core * right.transpose()
        })
        .collect();
    let mut frng = root.substream(2);
    let ffn: Vec<DMatrix<f64>> = (0..l).map(|_| gaussian_matrix(t, d, &mut frng) * 0.3).collect();
    let mut hidden = vec![gaussian_matrix(t, d, &mut root.substream(3))];
    for i in 0..l {
        let next = &hidden[i] + &attn[i] + &ffn[i];
        hidden.push(next);
    }

    let mut prng = root.substream(4);
    let mut probs = vec![0f32; l * h * t * t];
    for lh in 0..l * h {
        for q in 0..t {
            let row = softmax_row(&(0..=q).map(|_| 1.5 * prng.normal()).collect::<Vec<_>>());
            for (kk, p) in row.iter().enumerate() {
                probs[(lh * t + q) * t + kk] = *p as f32;
            }
        }
    }

    let mut orng = root.substream(5);
    rec.hidden_states = tensor3(&hidden);
    rec.attn_outputs = tensor3(&attn);
    rec.ffn_outputs = tensor3(&ffn);
    rec.attention_probs = Tensor::new(vec![l, h, t, t], probs).expect("attention shape");
    rec.first_token_logits = Tensor::from_fn(vec![v], |_| orng.normal() as f32);
    rec.logit_lens_unembed = Tensor::from_fn(vec![v, d], |_| orng.normal() as f32);
    let mut norm = 1.0f64;
    rec.ar_hidden_norms = Tensor::from_fn(vec![g], |_| {
        norm *= (0.05 * orng.normal()).exp();
        (30.0 * norm) as f32
    });
    rec.per_step_logprobs = Tensor::from_fn(vec![g], |_| (-(0.05 + 0.5 * orng.uniform())) as f32);
    let mut topk = Vec::with_capacity(g * 16);
    for _ in 0..g {
        let mut row = softmax_row(&(0..16).map(|_| 2.0 * orng.normal()).collect::<Vec<_>>());
        row.sort_by(|a, b| b.total_cmp(a));
        let mass = 0.9 + 0.09 * orng.uniform();
        topk.extend(row.iter().map(|p| (p * mass) as f32));
    }
    rec.step_topk_probs = Tensor::new(vec![g, 16], topk).expect("top-k shape");

    let mut xrng = root.substream(6);
    if !spec.large_model_style {
        rec.unembed_truth_dirs = Some(Tensor::from_fn(vec![2, d], |_| (xrng.normal() / (d as f64).sqrt()) as f32));
        rec.grad_norms = Some(Tensor::from_fn(vec![l], |_| (0.3 * xrng.normal()).exp() as f32));
    }
    let last: Vec<DMatrix<f64>> =
        hidden.iter().map(|m| m.rows(t - 1, 1).into_owned() + gaussian_matrix(1, d, &mut xrng) * 0.5).collect();
    rec.last_token_states = Some(Tensor::from_fn(vec![l + 1, d], |i| last[i / d][(0, i % d)] as f32));
    let mut tau = 0.0;
    rec.ar_truth_delta = Some(Tensor::from_fn(vec![g], |_| {
        tau = 0.7 * tau + xrng.normal();
        tau as f32
    }));
    if spec.with_jacobian {
        rec.jacobian_top_sv = Some(Tensor::from_fn(vec![l], |_| (0.1 * xrng.normal()).exp() as f32));
    }
    rec.notes.insert("producer".into(), "nctr synth".into());
    rec
}

/// Generates the corpus described by `spec`; deterministic in `seed`.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus, SpecError> {
    spec.validate()?;
    let slots = slots(spec);
    let records: Vec<ActivationRecord> =
        slots.par_iter().enumerate().map(|(i, s)| synthesize(spec, s, seed, i as u64)).collect();
    let manifest = CorpusManifest::new(records.iter().map(|r| r.meta.clone()).collect());
    manifest.validate().map_err(CorpusError::Integrity)?;
    Ok(SyntheticCorpus { manifest, records })
}

/// File name of a record's dump inside a dump directory.
pub fn dump_file_name(prompt_id: &str) -> String {
    format!("{prompt_id}.nctr")
}

/// Writes `manifest.jsonl` and `dumps/<prompt_id>.nctr` under `dir`.
pub fn write_synthetic_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<(), SpecError> {
    let dumps = dir.join("dumps");
    std::fs::create_dir_all(&dumps).map_err(|e| CorpusError::io(&dumps, e))?;
    write_manifest(dir.join("manifest.jsonl"), &corpus.manifest)?;
    corpus.records.par_iter().try_for_each(|r| write_record(dumps.join(dump_file_name(r.record_id())), r))?;
    Ok(())
}
