// SPDX-License-Identifier: MIT OR Apache-2.0

//! Stage orchestration: metrics extraction, analysis, classification, toy runs and reports.
//!
//! Every stage reads its inputs from and writes its outputs under [`AnalysisConfig::out`],
//! so stages can be run separately (see [`Layout`]). Outputs are deterministic for a fixed
//! configuration regardless of thread count.

mod analyze;
mod classify;
mod config;
mod extract;
mod report;
mod table;

use std::path::{Path, PathBuf};

pub use analyze::{
    cmd_analyze, AblationCell, AnalysisReport, AncovaCell, AncovaSummary, ContradictionRow, CorrelationRow,
    HypothesisResult, LayerDCell, SkippedCell, SweepCell, SweepCount,
};
pub use classify::{classification_rows, cmd_classify, ClassificationRows, ModelClassification};
pub use config::{sampled_layers, AnalysisConfig, ClusterComparison, Covariate, HypothesisDef, ORIGINAL_MODELS};
pub use extract::{cmd_ingest_check, cmd_metrics, IngestIssue, IngestReport, MetricsSummary};
pub use report::{cmd_report, cmd_synth, cmd_toy, load_synth_spec, ReportSummary};
pub use table::{fmt_f64, fmt_opt, LayerProfiles, MetricRow, MetricTable, RowMeta, Tsv, NA};

use crate::corpus::CorpusError;
use crate::stats::StatsError;
use crate::toysim::{SpecError, ToyError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration{}: {message}", path.as_ref().map(|p| format!(" {}", p.display())).unwrap_or_default())]
    Config { path: Option<PathBuf>, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Table { path: PathBuf, line: usize, message: String },
    #[error("stage {stage} has not been run: {path} is missing")]
    MissingUpstream { stage: &'static str, path: PathBuf },
    #[error("metric table has no column {0:?}")]
    MissingColumn(String),
    #[error("{failed} of {total} records failed, above the {threshold} threshold")]
    PartialFailure { failed: usize, total: usize, threshold: f64 },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Toy(#[from] ToyError),
    #[error(transparent)]
    Synth(#[from] SpecError),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn table(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Self::Table { path: path.to_path_buf(), line, message: message.into() }
    }

    /// Process exit status: 1 usage or configuration, 2 data integrity, 3 partial failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config { .. } | Self::Toy(_) => 1,
            Self::Synth(SpecError::Corpus(_)) => 2,
            Self::Synth(_) => 1,
            Self::PartialFailure { .. } => 3,
            Self::Corpus(_)
            | Self::Io { .. }
            | Self::Table { .. }
            | Self::MissingUpstream { .. }
            | Self::MissingColumn(_)
            | Self::Stats(_) => 2,
        }
    }
}

/// File locations of every stage's outputs under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn metrics_dir(&self) -> PathBuf {
        self.root.join("metrics")
    }
    pub fn metrics_table(&self) -> PathBuf {
        self.metrics_dir().join("metrics.tsv")
    }
    pub fn nulls_table(&self) -> PathBuf {
        self.metrics_dir().join("metrics_nulls.tsv")
    }
    pub fn layer_profiles(&self) -> PathBuf {
        self.metrics_dir().join("layer_profiles.tsv")
    }
    pub fn metrics_summary(&self) -> PathBuf {
        self.metrics_dir().join("summary.json")
    }
    pub fn analysis_dir(&self) -> PathBuf {
        self.root.join("analysis")
    }
    pub fn analysis_json(&self) -> PathBuf {
        self.analysis_dir().join("analysis.json")
    }
    pub fn classify_dir(&self) -> PathBuf {
        self.root.join("classify")
    }
    pub fn classifier_json(&self) -> PathBuf {
        self.classify_dir().join("classifier.json")
    }
    pub fn toy_dir(&self) -> PathBuf {
        self.root.join("toy")
    }
    pub fn toy_json(&self) -> PathBuf {
        self.toy_dir().join("toy.json")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn report_md(&self) -> PathBuf {
        self.report_dir().join("report.md")
    }
    pub fn plot_data(&self) -> PathBuf {
        self.report_dir().join("plot_data.json")
    }
}

pub(crate) fn require(stage: &'static str, path: PathBuf) -> Result<PathBuf, PipelineError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::MissingUpstream { stage, path })
    }
}

/// Seed for the `index`-th independent statistical cell of a stage.
pub(crate) fn cell_seed(seed: u64, stage: u64, index: usize) -> u64 {
    crate::rng::CounterRng::new(seed ^ stage.rotate_left(32), index as u64).next_u64()
}
