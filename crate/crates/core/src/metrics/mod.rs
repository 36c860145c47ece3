// SPDX-License-Identifier: MIT OR Apache-2.0

//! The 106-metric vector computed from one activation record.

mod attention;
mod embedding;
mod generation;
mod registry;
mod similarity;
mod trajectory;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ActivationRecord;
use crate::linalg::{effective_rank, singular_values, LinalgError};
use crate::response::MarkerTables;

pub use registry::{
    index_of, lookup, metric_names, registry, tercile_bounds, tercile_means, Family, Input, MetricDef, Tercile,
    METRIC_COUNT,
};

/// Why a metric has no value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum NullCause {
    /// An optional input tensor is absent from the record.
    MissingInput(&'static str),
    /// A series is too short for the statistic (no generated tokens, fewer than 3 layers in a fit).
    TooShort(&'static str),
    /// The inputs are present but the statistic is undefined on them.
    Degenerate(&'static str),
    NoSelfRefTokens,
}

impl std::fmt::Display for NullCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NullCause::MissingInput(s) => write!(f, "missing_input:{s}"),
            NullCause::TooShort(s) => write!(f, "too_short:{s}"),
            NullCause::Degenerate(s) => write!(f, "degenerate:{s}"),
            NullCause::NoSelfRefTokens => f.write_str("no_selfref_tokens"),
        }
    }
}

impl From<LinalgError> for NullCause {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::TooShort { .. } => NullCause::TooShort("series"),
            LinalgError::NonFinite => NullCause::Degenerate("non-finite input"),
            LinalgError::AllZero => NullCause::Degenerate("all-zero input"),
            LinalgError::DegenerateInput(s) => NullCause::Degenerate(s),
            _ => NullCause::Degenerate("numerical kernel rejected input"),
        }
    }
}

/// Where the per-layer top singular values for the spectral family came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralSource {
    /// `jacobian_top_sv` supplied by the producer.
    Exact,
    /// Least-squares transition operator between consecutive hidden-state matrices.
    Proxy,
}

impl SpectralSource {
    pub fn label(self) -> &'static str {
        match self {
            SpectralSource::Exact => "exact",
            SpectralSource::Proxy => "proxy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Half-width of the near-critical band for contraction ratios.
    pub eps_mortality: f64,
    /// Half-width of the critical band for `log sigma_1`.
    pub eps_critical: f64,
    /// Upper bound on the AR order; shorter series use `floor((n - 1) / 2)`.
    pub ar_order: usize,
    pub delta_unit: f64,
    pub selfref_lexicon: Vec<String>,
    #[serde(skip)]
    pub markers: MarkerTables,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            eps_mortality: 0.05,
            eps_critical: 0.05,
            ar_order: crate::linalg::DEFAULT_AR_ORDER,
            delta_unit: crate::linalg::DEFAULT_DELTA_UNIT,
            selfref_lexicon: ["this", "sentence", "statement", "itself", "myself", "i", "me", "here"]
                .map(String::from)
                .to_vec(),
            markers: MarkerTables::default(),
        }
    }
}

/// One record's metrics in registry order; `None` marks an unavailable value.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricVector {
    pub record_id: String,
    values: Vec<Option<f64>>,
    causes: BTreeMap<&'static str, NullCause>,
    pub spectral_source: SpectralSource,
    /// Layers dropped from the spectral family because `sigma_1` was not positive and finite.
    pub spectral_skipped_layers: usize,
}

impl MetricVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        index_of(name).and_then(|i| self.values[i])
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, Option<f64>)> + '_ {
        registry().iter().zip(&self.values).map(|(d, v)| (d.name, *v))
    }

    pub fn null_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Null metrics and their causes, by name.
    pub fn null_causes(&self) -> &BTreeMap<&'static str, NullCause> {
        &self.causes
    }

    /// Name-keyed view, matching the structured serialization.
    pub fn to_map(&self) -> BTreeMap<&'static str, Option<f64>> {
        self.iter().collect()
    }
}

/// Accumulates family outputs and enforces that every registered name is written once.
pub(crate) struct Sink {
    values: Vec<Option<f64>>,
    written: Vec<bool>,
    causes: BTreeMap<&'static str, NullCause>,
}

impl Sink {
    fn new() -> Self {
        Sink { values: vec![None; METRIC_COUNT], written: vec![false; METRIC_COUNT], causes: BTreeMap::new() }
    }

    pub(crate) fn put(&mut self, name: &'static str, value: Result<f64, NullCause>) {
        let i = index_of(name).unwrap_or_else(|| panic!("unregistered metric {name}"));
        assert!(!self.written[i], "metric {name} written twice");
        self.written[i] = true;
        match value {
            Ok(v) if v.is_finite() => self.values[i] = Some(v),
            Ok(_) => {
                self.causes.insert(name, NullCause::Degenerate("non-finite result"));
            }
            Err(c) => {
                self.causes.insert(name, c);
            }
        }
    }

    pub(crate) fn null_all(&mut self, names: &[&'static str], cause: NullCause) {
        for n in names {
            self.put(n, Err(cause.clone()));
        }
    }
}

/// Per-layer block-output spectra shared by several families.
pub(crate) struct BlockSpectra {
    pub attn: Vec<Vec<f64>>,
    pub ffn: Vec<Vec<f64>>,
}

impl BlockSpectra {
    fn new(r: &ActivationRecord) -> Self {
        let l = r.layers();
        let sv = |m| singular_values(&m).unwrap_or_default();
        BlockSpectra {
            attn: (0..l).map(|i| sv(r.attn_output(i))).collect(),
            ffn: (0..l).map(|i| sv(r.ffn_output(i))).collect(),
        }
    }
}

/// Effective rank with the convention that a zero block has rank 0.
pub(crate) fn block_rank(sv: &[f64]) -> f64 {
    effective_rank(sv).unwrap_or(0.0)
}

/// Effective rank of the attention output block at every layer (zero blocks give 0).
pub fn attn_eff_rank_profile(r: &ActivationRecord) -> Vec<f64> {
    (0..r.layers()).map(|l| block_rank(&singular_values(&r.attn_output(l)).unwrap_or_default())).collect()
}

/// Computes all 106 metrics. Never fails: unavailable values are null with a recorded cause.
pub fn compute_all(r: &ActivationRecord, cfg: &MetricsConfig) -> MetricVector {
    let spectra = BlockSpectra::new(r);
    let mut sink = Sink::new();
    attention::compute(r, &spectra, &mut sink);
    trajectory::mortality(r, cfg, &mut sink);
    trajectory::truth_skolem(r, cfg, &mut sink);
    let (source, skipped) = trajectory::spectral(r, cfg, &mut sink);
    similarity::compute(r, &spectra, &mut sink);
    embedding::compute(r, cfg, &mut sink);
    generation::compute(r, cfg, &spectra, &mut sink);
    if let Some(i) = sink.written.iter().position(|w| !w) {
        panic!("metric {} not computed", registry()[i].name);
    }
    MetricVector {
        record_id: r.record_id().to_string(),
        values: sink.values,
        causes: sink.causes,
        spectral_source: source,
        spectral_skipped_layers: skipped,
    }
}
