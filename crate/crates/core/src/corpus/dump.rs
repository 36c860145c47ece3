// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `NCTR` activation-dump container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "NCTR"  version  entry_count
//! entry_count x { name_len  name(UTF-8)  rank  dims[rank]  payload(f32 LE, product(dims)) }
//! metadata trailer: UTF-8 JSON, runs to end of file
//! ```
//!
//! Per-layer sequences are stored as single stacked tensors, layer index first.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CorpusError, PromptMeta};

pub const DUMP_MAGIC: &[u8; 4] = b"NCTR";
pub const DUMP_VERSION: u32 = 1;

/// Tensors every dump must carry, in canonical write order.
pub const REQUIRED_TENSORS: [&str; 9] = [
    "hidden_states",
    "attention_probs",
    "attn_outputs",
    "ffn_outputs",
    "first_token_logits",
    "logit_lens_unembed",
    "ar_hidden_norms",
    "per_step_logprobs",
    "step_topk_probs",
];

/// Tensors that may be absent as a whole (extraction gaps), in canonical write order.
pub const OPTIONAL_TENSORS: [&str; 5] =
    ["unembed_truth_dirs", "last_token_states", "ar_truth_delta", "grad_norms", "jacobian_top_sv"];

/// Dense row-major f32 array of rank 1 to 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, CorpusError> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(CorpusError::Shape(format!("rank {} outside 1..=4", dims.len())));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(CorpusError::Shape(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(usize) -> f32) -> Self {
        let n = dims.iter().product();
        Self { data: (0..n).map(&mut f).collect(), dims }
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Self { dims: vec![data.len()], data }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Contiguous block addressed by a prefix of indices.
    pub fn block(&self, prefix: &[usize]) -> &[f32] {
        let mut offset = 0;
        let mut stride: usize = self.dims.iter().product();
        for (axis, &i) in prefix.iter().enumerate() {
            stride /= self.dims[axis];
            assert!(i < self.dims[axis], "index {i} out of range on axis {axis}");
            offset += i * stride;
        }
        &self.data[offset..offset + stride]
    }

    /// The trailing two axes at `prefix`, widened to f64.
    pub fn matrix(&self, prefix: &[usize]) -> DMatrix<f64> {
        let r = self.rank();
        assert_eq!(prefix.len() + 2, r, "matrix view needs rank-2 trailing block");
        let (rows, cols) = (self.dims[r - 2], self.dims[r - 1]);
        let block = self.block(prefix);
        DMatrix::from_fn(rows, cols, |i, j| block[i * cols + j] as f64)
    }

    /// Row `row` of the trailing matrix at `prefix`, widened to f64.
    pub fn row(&self, prefix: &[usize], row: usize) -> Vec<f64> {
        let block = self.block(prefix);
        let cols = self.dims[self.rank() - 1];
        block[row * cols..(row + 1) * cols].iter().map(|&x| x as f64).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&x| x as f64).collect()
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let (r, c) = m.shape();
        Self::from_fn(vec![r, c], |k| m[(k / c, k % c)] as f32)
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Tensor]) -> Self {
        assert!(!parts.is_empty());
        let inner = parts[0].dims.clone();
        let mut dims = vec![parts.len()];
        dims.extend(&inner);
        let mut data = Vec::with_capacity(dims.iter().product());
        for p in parts {
            assert_eq!(p.dims, inner, "stack needs equal shapes");
            data.extend_from_slice(&p.data);
        }
        Self { dims, data }
    }
}

/// A named tensor as it appears in the container.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub tensor: Tensor,
}

/// One prompt's activation dump.
///
/// Shapes, with `L` layers, `T` prompt tokens, width `d`, `H` heads, reduced
/// vocabulary `V` and `G` generated tokens:
///
/// | field | shape |
/// |---|---|
/// | `hidden_states` | `(L+1, T, d)` residual stream, embeddings first |
/// | `attention_probs` | `(L, H, T, T)` |
/// | `attn_outputs`, `ffn_outputs` | `(L, T, d)` block outputs |
/// | `first_token_logits` | `(V)` over the reduced vocabulary |
/// | `logit_lens_unembed` | `(V, d)` unembedding rows for the same vocabulary |
/// | `ar_hidden_norms`, `per_step_logprobs` | `(G)` |
/// | `step_topk_probs` | `(G, k)` descending top-k probabilities, `k = 16` by default |
/// | `unembed_truth_dirs` | `(2, d)`: rows `v_T`, `v_F` |
/// | `last_token_states` | `(L+1, d)` at the final generated token |
/// | `ar_truth_delta` | `(G)` |
/// | `grad_norms`, `jacobian_top_sv` | `(L)` |
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub meta: PromptMeta,
    pub token_strings: Vec<String>,
    pub true_token_index: usize,
    pub false_token_index: usize,
    pub hidden_states: Tensor,
    pub attention_probs: Tensor,
    pub attn_outputs: Tensor,
    pub ffn_outputs: Tensor,
    pub first_token_logits: Tensor,
    pub logit_lens_unembed: Tensor,
    pub ar_hidden_norms: Tensor,
    pub per_step_logprobs: Tensor,
    pub step_topk_probs: Tensor,
    pub unembed_truth_dirs: Option<Tensor>,
    pub last_token_states: Option<Tensor>,
    pub ar_truth_delta: Option<Tensor>,
    pub grad_norms: Option<Tensor>,
    pub jacobian_top_sv: Option<Tensor>,
    /// Free-form producer notes (hook conventions, token resolution, truncation).
    pub notes: BTreeMap<String, String>,
    /// Tensors with names outside the known set, preserved on rewrite.
    pub extra: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Trailer {
    meta: PromptMeta,
    token_strings: Vec<String>,
    true_token_index: usize,
    false_token_index: usize,
    #[serde(default)]
    notes: BTreeMap<String, String>,
}

/// Model-side dimensions of a record; token and generation lengths come from the metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordShape {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub vocab: usize,
    pub topk: usize,
}

impl ActivationRecord {
    /// A structurally valid record with zero activations, uniform causal attention and no
    /// optional tensors. Producers and tests fill in the fields they need.
    pub fn blank(meta: PromptMeta, shape: RecordShape) -> Self {
        let RecordShape { layers: l, width: d, heads: h, vocab: v, topk: k } = shape;
        let t = meta.prompt_token_count;
        let g = meta.response_token_count;
        let causal = Tensor::from_fn(vec![l, h, t, t], |i| {
            let (q, key) = ((i / t) % t, i % t);
            if key <= q {
                1.0 / (q + 1) as f32
            } else {
                0.0
            }
        });
        ActivationRecord {
            token_strings: (0..t).map(|i| format!("tok{i}")).collect(),
            true_token_index: 0,
            false_token_index: 1,
            hidden_states: Tensor::from_fn(vec![l + 1, t, d], |_| 0.0),
            attention_probs: causal,
            attn_outputs: Tensor::from_fn(vec![l, t, d], |_| 0.0),
            ffn_outputs: Tensor::from_fn(vec![l, t, d], |_| 0.0),
            first_token_logits: Tensor::from_fn(vec![v], |_| 0.0),
            logit_lens_unembed: Tensor::from_fn(vec![v, d], |_| 0.0),
            ar_hidden_norms: Tensor::from_fn(vec![g], |_| 1.0),
            per_step_logprobs: Tensor::from_fn(vec![g], |_| 0.0),
            step_topk_probs: Tensor::from_fn(vec![g, k], |i| if i % k == 0 { 1.0 } else { 0.0 }),
            unembed_truth_dirs: None,
            last_token_states: None,
            ar_truth_delta: None,
            grad_norms: None,
            jacobian_top_sv: None,
            notes: BTreeMap::new(),
            extra: Vec::new(),
            meta,
        }
    }

    /// Number of transformer layers `L`.
    pub fn layers(&self) -> usize {
        self.attn_outputs.dims[0]
    }

    pub fn tokens(&self) -> usize {
        self.hidden_states.dims[1]
    }

    pub fn width(&self) -> usize {
        self.hidden_states.dims[2]
    }

    pub fn heads(&self) -> usize {
        self.attention_probs.dims[1]
    }

    pub fn generated(&self) -> usize {
        self.per_step_logprobs.dims[0]
    }

    pub fn record_id(&self) -> &str {
        &self.meta.prompt_id
    }

    /// Hidden-state matrix `H_l` (T x d), `l` in `0..=L`.
    pub fn hidden(&self, layer: usize) -> DMatrix<f64> {
        self.hidden_states.matrix(&[layer])
    }

    /// Final prompt-token hidden state at layer `l`.
    pub fn last_token_hidden(&self, layer: usize) -> Vec<f64> {
        self.hidden_states.row(&[layer], self.tokens() - 1)
    }

    pub fn attn_output(&self, layer: usize) -> DMatrix<f64> {
        self.attn_outputs.matrix(&[layer])
    }

    pub fn ffn_output(&self, layer: usize) -> DMatrix<f64> {
        self.ffn_outputs.matrix(&[layer])
    }

    /// Attention pattern of one head (T x T, rows are queries).
    pub fn attention(&self, layer: usize, head: usize) -> DMatrix<f64> {
        self.attention_probs.matrix(&[layer, head])
    }

    fn tensors(&self) -> Vec<(&'static str, Option<&Tensor>)> {
        vec![
            ("hidden_states", Some(&self.hidden_states)),
            ("attention_probs", Some(&self.attention_probs)),
            ("attn_outputs", Some(&self.attn_outputs)),
            ("ffn_outputs", Some(&self.ffn_outputs)),
            ("first_token_logits", Some(&self.first_token_logits)),
            ("logit_lens_unembed", Some(&self.logit_lens_unembed)),
            ("ar_hidden_norms", Some(&self.ar_hidden_norms)),
            ("per_step_logprobs", Some(&self.per_step_logprobs)),
            ("step_topk_probs", Some(&self.step_topk_probs)),
            ("unembed_truth_dirs", self.unembed_truth_dirs.as_ref()),
            ("last_token_states", self.last_token_states.as_ref()),
            ("ar_truth_delta", self.ar_truth_delta.as_ref()),
            ("grad_norms", self.grad_norms.as_ref()),
            ("jacobian_top_sv", self.jacobian_top_sv.as_ref()),
        ]
    }

    /// Names of optional tensor families absent from this record.
    pub fn absent_fields(&self) -> Vec<&'static str> {
        self.tensors().into_iter().filter(|(_, t)| t.is_none()).map(|(n, _)| n).collect()
    }

    /// Checks shape consistency across all tensors and the metadata.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let shape = |name: &str, t: &Tensor, want: &[usize]| -> Result<(), CorpusError> {
            if t.dims != want {
                return Err(CorpusError::Shape(format!("{name}: dims {:?}, expected {want:?}", t.dims)));
            }
            Ok(())
        };
        let hs = &self.hidden_states.dims;
        if hs.len() != 3 {
            return Err(CorpusError::Shape(format!("hidden_states must be rank 3, got {hs:?}")));
        }
        if hs[0] < 3 {
            return Err(CorpusError::Shape(format!("need at least 2 layers, hidden_states has {} slices", hs[0])));
        }
        let (l, t, d) = (hs[0] - 1, hs[1], hs[2]);
        if t == 0 || d == 0 {
            return Err(CorpusError::Shape("empty token or hidden axis".into()));
        }
        shape("attn_outputs", &self.attn_outputs, &[l, t, d])?;
        shape("ffn_outputs", &self.ffn_outputs, &[l, t, d])?;
        let ap = &self.attention_probs.dims;
        if ap.len() != 4 || ap[0] != l || ap[1] == 0 || ap[2] != t || ap[3] != t {
            return Err(CorpusError::Shape(format!("attention_probs dims {ap:?}, expected [{l}, H, {t}, {t}]")));
        }
        if t != self.meta.prompt_token_count {
            return Err(CorpusError::Shape(format!(
                "{t} token positions but prompt_token_count = {}",
                self.meta.prompt_token_count
            )));
        }
        if self.token_strings.len() != t {
            return Err(CorpusError::Shape(format!("{} token strings for {t} positions", self.token_strings.len())));
        }
        let v = self.first_token_logits.dims[0];
        shape("first_token_logits", &self.first_token_logits, &[v])?;
        shape("logit_lens_unembed", &self.logit_lens_unembed, &[v, d])?;
        if self.true_token_index >= v || self.false_token_index >= v || self.true_token_index == self.false_token_index
        {
            return Err(CorpusError::Shape(format!(
                "true/false token indices ({}, {}) invalid for vocabulary of {v}",
                self.true_token_index, self.false_token_index
            )));
        }
        let g = self.meta.response_token_count;
        shape("ar_hidden_norms", &self.ar_hidden_norms, &[g])?;
        shape("per_step_logprobs", &self.per_step_logprobs, &[g])?;
        let k = self.step_topk_probs.dims.get(1).copied().unwrap_or(0);
        if k < 5 {
            return Err(CorpusError::Shape(format!("step_topk_probs needs at least 5 columns, got {k}")));
        }
        shape("step_topk_probs", &self.step_topk_probs, &[g, k])?;
        if let Some(x) = &self.unembed_truth_dirs {
            shape("unembed_truth_dirs", x, &[2, d])?;
        }
        if let Some(x) = &self.last_token_states {
            shape("last_token_states", x, &[l + 1, d])?;
        }
        if let Some(x) = &self.ar_truth_delta {
            shape("ar_truth_delta", x, &[g])?;
        }
        if let Some(x) = &self.grad_norms {
            shape("grad_norms", x, &[l])?;
        }
        if let Some(x) = &self.jacobian_top_sv {
            shape("jacobian_top_sv", x, &[l])?;
        }
        self.meta.check().map_err(CorpusError::Integrity)?;
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("value fits in u32");
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serializes a record; tensors are written in canonical order.
pub fn encode_record(record: &ActivationRecord) -> Vec<u8> {
    let mut entries: Vec<(&str, &Tensor)> =
        record.tensors().into_iter().filter_map(|(n, t)| t.map(|t| (n, t))).collect();
    entries.extend(record.extra.iter().map(|e| (e.name.as_str(), &e.tensor)));
    let payload: usize = entries.iter().map(|(_, t)| t.data.len() * 4 + 16).sum();
    let mut out = Vec::with_capacity(payload + 4096);
    out.extend_from_slice(DUMP_MAGIC);
    put_u32(&mut out, DUMP_VERSION as usize);
    put_u32(&mut out, entries.len());
    for (name, t) in entries {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank());
        for &d in &t.dims {
            put_u32(&mut out, d);
        }
        for &x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let trailer = Trailer {
        meta: record.meta.clone(),
        token_strings: record.token_strings.clone(),
        true_token_index: record.true_token_index,
        false_token_index: record.false_token_index,
        notes: record.notes.clone(),
    };
    serde_json::to_writer(&mut out, &trailer).expect("trailer serializes");
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CorpusError::Shape(format!("truncated dump: need {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CorpusError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_record(bytes: &[u8]) -> Result<ActivationRecord, CorpusError> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4).map_err(|_| CorpusError::BadMagic([0; 4]))?;
    if magic != DUMP_MAGIC {
        return Err(CorpusError::BadMagic([magic[0], magic[1], magic[2], magic[3]]));
    }
    let version = cur.u32()?;
    if version != DUMP_VERSION {
        return Err(CorpusError::VersionUnsupported(version));
    }
    let count = cur.u32()? as usize;
    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut order = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|e| CorpusError::Shape(format!("tensor name is not UTF-8: {e}")))?
            .to_string();
        let rank = cur.u32()? as usize;
        if !(1..=4).contains(&rank) {
            return Err(CorpusError::Shape(format!("{name}: rank {rank} outside 1..=4")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32()? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CorpusError::Shape(format!("{name}: dims overflow")))?;
        let raw = cur.take(n.checked_mul(4).ok_or_else(|| CorpusError::Shape(format!("{name}: too large")))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        if tensors.insert(name.clone(), Tensor { dims, data }).is_some() {
            return Err(CorpusError::Shape(format!("duplicate tensor name {name:?}")));
        }
        order.push(name);
    }
    let trailer: Trailer = serde_json::from_slice(&bytes[cur.pos..])
        .map_err(|e| CorpusError::Parse { line: 0, message: format!("metadata trailer: {e}") })?;
    let mut take = |name: &str| tensors.remove(name);
    let mut required = |name: &str| take(name).ok_or_else(|| CorpusError::MissingTensor(name.to_string()));
    let hidden_states = required("hidden_states")?;
    let attention_probs = required("attention_probs")?;
    let attn_outputs = required("attn_outputs")?;
    let ffn_outputs = required("ffn_outputs")?;
    let first_token_logits = required("first_token_logits")?;
    let logit_lens_unembed = required("logit_lens_unembed")?;
    let ar_hidden_norms = required("ar_hidden_norms")?;
    let per_step_logprobs = required("per_step_logprobs")?;
    let step_topk_probs = required("step_topk_probs")?;
    let unembed_truth_dirs = take("unembed_truth_dirs");
    let last_token_states = take("last_token_states");
    let ar_truth_delta = take("ar_truth_delta");
    let grad_norms = take("grad_norms");
    let jacobian_top_sv = take("jacobian_top_sv");
    let extra =
        order.into_iter().filter_map(|name| tensors.remove(&name).map(|tensor| TensorEntry { name, tensor })).collect();
    let record = ActivationRecord {
        meta: trailer.meta,
        token_strings: trailer.token_strings,
        true_token_index: trailer.true_token_index,
        false_token_index: trailer.false_token_index,
        hidden_states,
        attention_probs,
        attn_outputs,
        ffn_outputs,
        first_token_logits,
        logit_lens_unembed,
        ar_hidden_norms,
        per_step_logprobs,
        step_topk_probs,
        unembed_truth_dirs,
        last_token_states,
        ar_truth_delta,
        grad_norms,
        jacobian_top_sv,
        notes: trailer.notes,
        extra,
    };
    record.validate()?;
    Ok(record)
}

pub fn read_record(path: impl AsRef<Path>) -> Result<ActivationRecord, CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    decode_record(&bytes)
}

pub fn write_record(path: impl AsRef<Path>, record: &ActivationRecord) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, encode_record(record)).map_err(|e| CorpusError::io(path, e))
}
