// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{Cluster, Group};
use crate::metrics::MetricsConfig;
use crate::response::MarkerTables;
use crate::stats::{ClassifierConfig, DEFAULT_BOOTSTRAP_ITERATIONS};
use crate::toysim::ToyConfig;

/// A pre-specified two-group test on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisDef {
    pub name: String,
    pub metric: String,
    pub group: Group,
    pub reference: Group,
    /// Why the definition is a modelling choice rather than a fixed one, if it is.
    #[serde(default)]
    pub assumption: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterComparison {
    pub target: Cluster,
    pub reference: Cluster,
}

impl ClusterComparison {
    pub fn label(&self) -> String {
        format!("{}_vs_{}", self.target.label(), self.reference.label())
    }
}

/// Covariate for the length-control ANCOVA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    /// Prompt plus response tokens.
    SequenceLength,
    PromptTokens,
    ResponseTokens,
}

fn default_hypotheses() -> Vec<HypothesisDef> {
    let h = |name: &str, metric: &str, reference: Group, assumption: Option<&str>| HypothesisDef {
        name: name.into(),
        metric: metric.into(),
        group: Group::Paradox,
        reference,
        assumption: assumption.map(String::from),
    };
    vec![
        h("H1", "attn_eff_rank_mean", Group::Control, None),
        h("H2", "truth_delta_zero_crossings", Group::Control, None),
        h("H3", "skolem_zero_crossings", Group::Nonsense, None),
        h(
            "H4",
            "mortality_mean_contraction",
            Group::ComplexNonref,
            Some("the metric is a default choice, override it in the configuration if a different one was intended"),
        ),
        h("H5", "spectral_lyapunov_exponent", Group::Control, None),
    ]
}

fn default_comparisons() -> Vec<ClusterComparison> {
    [Cluster::C1, Cluster::C2, Cluster::C3]
        .into_iter()
        .map(|reference| ClusterComparison { target: Cluster::C4, reference })
        .collect()
}

/// Models whose hypothesis tests share one Bonferroni pool of 13 tests.
pub const ORIGINAL_MODELS: [&str; 3] =
    ["Qwen3-VL-8B-Instruct", "Llama-3.2-11B-Vision-Instruct", "Llama-3.3-70B-Instruct"];

/// Settings for every pipeline stage. Loaded from TOML, then overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub manifest: Option<PathBuf>,
    /// Dump directory; defaults to `dumps/` next to the manifest.
    pub dumps: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub alpha: f64,
    pub fdr_q: f64,
    /// Overrides the Bonferroni test count.
    pub bonferroni_m: Option<usize>,
    pub bonferroni_pool: Vec<String>,
    pub bonferroni_pool_m: usize,
    pub bootstrap_iterations: usize,
    pub large_effect: f64,
    pub t0_only: bool,
    pub max_failure_fraction: f64,
    pub covariate: Covariate,
    pub hypotheses: Vec<HypothesisDef>,
    pub comparisons: Vec<ClusterComparison>,
    /// Explicit layers for per-layer profiles; otherwise `sampled_layer_count` evenly spaced.
    pub sampled_layers: Option<Vec<usize>>,
    pub sampled_layer_count: usize,
    /// Marker tables file; the bundled tables are used when unset.
    pub markers: Option<PathBuf>,
    pub metrics: MetricsConfig,
    pub classifier: ClassifierConfig,
    pub toy: ToyConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            manifest: None,
            dumps: None,
            out: PathBuf::from("out"),
            seed: 42,
            alpha: 0.05,
            fdr_q: 0.05,
            bonferroni_m: None,
            bonferroni_pool: ORIGINAL_MODELS.map(String::from).to_vec(),
            bonferroni_pool_m: 13,
            bootstrap_iterations: DEFAULT_BOOTSTRAP_ITERATIONS,
            large_effect: 0.8,
            t0_only: false,
            max_failure_fraction: 0.01,
            covariate: Covariate::SequenceLength,
            hypotheses: default_hypotheses(),
            comparisons: default_comparisons(),
            sampled_layers: None,
            sampled_layer_count: 7,
            markers: None,
            metrics: MetricsConfig::default(),
            classifier: ClassifierConfig::default(),
            toy: ToyConfig::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config { path: None, message: e.to_string() })
    }

    /// Defaults, overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self, PipelineError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| PipelineError::Config { path: Some(path.to_path_buf()), message: e.to_string() })
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config { path: None, message: m.to_string() });
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.fdr_q > 0.0 && self.fdr_q < 1.0) {
            return bad("alpha and fdr_q must lie in (0, 1)");
        }
        if self.bootstrap_iterations == 0 {
            return bad("bootstrap_iterations must be positive");
        }
        if self.bonferroni_m == Some(0) || self.bonferroni_pool_m == 0 {
            return bad("Bonferroni test counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return bad("max_failure_fraction must lie in [0, 1]");
        }
        if self.sampled_layers.is_none() && self.sampled_layer_count == 0 {
            return bad("sampled_layer_count must be positive");
        }
        for h in &self.hypotheses {
            if crate::metrics::index_of(&h.metric).is_none() {
                return Err(PipelineError::MissingColumn(h.metric.clone()));
            }
        }
        self.toy.validate()?;
        Ok(())
    }

    pub fn manifest_path(&self) -> Result<&Path, PipelineError> {
        self.manifest.as_deref().ok_or_else(|| PipelineError::Usage("no manifest given (--manifest)".into()))
    }

    pub fn dump_dir(&self) -> Result<PathBuf, PipelineError> {
        if let Some(d) = &self.dumps {
            return Ok(d.clone());
        }
        let m = self.manifest_path()?;
        Ok(m.parent().unwrap_or(Path::new(".")).join("dumps"))
    }

    pub fn marker_tables(&self) -> Result<MarkerTables, PipelineError> {
        let Some(path) = &self.markers else { return Ok(MarkerTables::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        MarkerTables::from_toml(&text)
            .map_err(|e| PipelineError::Config { path: Some(path.clone()), message: e.to_string() })
    }

    /// Layers for per-layer profiles in a model with `layers` attention blocks.
    pub fn profile_layers(&self, layers: usize) -> Vec<usize> {
        if let Some(explicit) = &self.sampled_layers {
            return explicit.iter().copied().filter(|&l| l < layers).collect();
        }
        sampled_layers(layers, self.sampled_layer_count)
    }
}

/// `count` evenly spaced layers from `0..layers`, endpoints included.
pub fn sampled_layers(layers: usize, count: usize) -> Vec<usize> {
    if layers == 0 || count == 0 {
        return Vec::new();
    }
    if count == 1 || layers == 1 {
        return vec![0];
    }
    let mut out: Vec<usize> =
        (0..count).map(|i| ((i * (layers - 1)) as f64 / (count - 1) as f64).round() as usize).collect();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let cfg = AnalysisConfig::default();
        cfg.validate().unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(AnalysisConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(cfg.hypotheses.len(), 5);
        assert!(cfg.hypotheses[3].assumption.is_some());
    }

    #[test]
    fn partial_file_overlays_defaults() {
        let cfg = AnalysisConfig::from_toml("seed = 7\nt0_only = true\n[classifier]\nlambda = 0.5\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(cfg.t0_only);
        assert_eq!(cfg.classifier.lambda, 0.5);
        assert_eq!(cfg.classifier.folds, 5);
        assert!(AnalysisConfig::from_toml("sed = 7\n").is_err());
    }

    #[test]
    fn unknown_hypothesis_metric_rejected() {
        let mut cfg = AnalysisConfig::default();
        cfg.hypotheses[0].metric = "no_such_metric".into();
        assert!(matches!(cfg.validate(), Err(PipelineError::MissingColumn(_))));
    }

    #[test]
    fn sampled_layer_spacing() {
        assert_eq!(sampled_layers(12, 7), vec![0, 2, 4, 6, 7, 9, 11]);
        assert_eq!(sampled_layers(36, 7), vec![0, 6, 12, 18, 23, 29, 35]);
        assert_eq!(sampled_layers(3, 7), vec![0, 1, 2]);
        assert_eq!(sampled_layers(1, 7), vec![0]);
    }
}
