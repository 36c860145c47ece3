// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt taxonomy, manifests and the binary activation-dump container.

mod dump;
mod manifest;
mod taxonomy;

pub use dump::{
    decode_record, encode_record, read_record, write_record, ActivationRecord, RecordShape, Tensor, TensorEntry,
    DUMP_MAGIC, DUMP_VERSION, OPTIONAL_TENSORS, REQUIRED_TENSORS,
};
pub use manifest::{load_manifest, parse_manifest, write_manifest, CorpusManifest, LinkedPair};
pub use taxonomy::{cluster_of, Cluster, Group, PromptMeta, TEMPERATURES};

use std::path::PathBuf;

/// Specific integrity violations found while validating manifests and records.
#[derive(Debug, Clone, PartialEq)]
pub enum IntegrityIssue {
    DuplicateId(String),
    ClusterMismatch { prompt_id: String, group: Group, stored: Cluster, derived: Cluster },
    LevelMismatch { prompt_id: String, group: Group, level: i32 },
    BadTemperature { prompt_id: String, temperature: f64 },
    PairOnWrongLevel { prompt_id: String, level: i32 },
    MissingPairId { prompt_id: String, level: i32 },
    UnpairedPair(String),
    PromptTokenCount { prompt_id: String },
    GroupSizes { model_id: String, temperature: f64, detail: String },
}

impl std::fmt::Display for IntegrityIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DuplicateId(id) => write!(f, "duplicate prompt_id {id:?}"),
            Self::ClusterMismatch { prompt_id, group, stored, derived } => write!(
                f,
                "{prompt_id}: group {} belongs to cluster {} but {} is stored",
                group.label(),
                derived.label(),
                stored.label()
            ),
            Self::LevelMismatch { prompt_id, group, level } => write!(
                f,
                "{prompt_id}: group {} has level {} but level {level} is stored",
                group.label(),
                group.level()
            ),
            Self::BadTemperature { prompt_id, temperature } => {
                write!(f, "{prompt_id}: temperature {temperature} not in {{0.0, 0.3, 0.7}}")
            }
            Self::PairOnWrongLevel { prompt_id, level } => {
                write!(f, "{prompt_id}: pair_id set on level {level} (only -5 and 8 are paired)")
            }
            Self::MissingPairId { prompt_id, level } => {
                write!(f, "{prompt_id}: level {level} requires a pair_id")
            }
            Self::UnpairedPair(id) => {
                write!(
                    f,
                    "pair_id {id:?} must appear exactly once at level -5 and once at level 8 per model and temperature"
                )
            }
            Self::PromptTokenCount { prompt_id } => write!(f, "{prompt_id}: prompt_token_count must be >= 1"),
            Self::GroupSizes { model_id, temperature, detail } => {
                write!(f, "complete manifest, {model_id} @ T={temperature}: {detail}")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity: {0}")]
    Integrity(IntegrityIssue),
    #[error("bad magic {0:?}, expected \"NCTR\"")]
    BadMagic([u8; 4]),
    #[error("unsupported dump version {0}")]
    VersionUnsupported(u32),
    #[error("missing required tensor {0:?}")]
    MissingTensor(String),
    #[error("shape error: {0}")]
    Shape(String),
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn is_integrity(&self) -> bool {
        !matches!(self, Self::Io { .. })
    }
}
