// SPDX-License-Identifier: MIT OR Apache-2.0

//! Analysis engine for matrix-level dynamics of transformer activations under
//! self-referential and paradoxical prompts.
//!
//! The crate is organized bottom-up:
//!
//! - [`corpus`]: prompt-taxonomy manifests and the `NCTR` activation-dump container.
//! - [`linalg`]: spectra, entropy ranks, CKA, recurrence fitting, trajectory statistics.
//! - [`metrics`]: the 106-metric registry and per-family extraction from one record.
//! - [`toysim`]: the toy residual network and the synthetic-corpus generator.
//! - [`stats`]: effect sizes, bootstrap, rank tests, FDR, ANCOVA, cross-validated AUC.
//! - [`pipeline`]: stage orchestration behind the `nctr` command-line tool.

#![forbid(unsafe_code)]
// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod response;
pub mod rng;
pub mod stats;
pub mod toysim;

pub use corpus::{ActivationRecord, CorpusManifest, PromptMeta};
pub use metrics::{compute_all, MetricVector};
