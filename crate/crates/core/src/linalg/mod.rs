// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic numerical kernels shared by the metric families.
//!
//! Everything here works in f64 regardless of the f32 storage of dumps.

mod moments;
mod operator;
mod recurrence;
mod similarity;
mod spectrum;

pub use moments::{excess_kurtosis, linear_slope, mean, population_std};
pub use operator::{transition_operator, transition_operator_top_sv, OperatorFit};
pub use recurrence::{fit_ar, fit_ar_with, zero_crossings, ARFit, DEFAULT_AR_ORDER, DEFAULT_DELTA_UNIT};
pub use similarity::{cosine, linear_cka};
pub use spectrum::{effective_rank, participation_ratio, singular_values, spectral_entropy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("non-finite input")]
    NonFinite,
    #[error("all entries are zero")]
    AllZero,
    #[error("negative entry in a spectrum")]
    NegativeEntry,
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("series of length {len} too short, need {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("recurrence order must be at least 1")]
    InvalidOrder,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
