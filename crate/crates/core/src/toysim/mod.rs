// SPDX-License-Identifier: MIT OR Apache-2.0

//! Toy residual-network dynamics and the synthetic activation-corpus generator.

mod calibrate;
mod synth;
mod toy;

pub use calibrate::{
    calibrate, Calibration, CalibrationCell, CALIBRATION_GRID, D_BAND, P_MAX, RATIO_BAND, RHO_BAND, TARGET_D,
    TARGET_RATIO, TARGET_RHO,
};
pub use synth::{
    dump_file_name, generate_synthetic_corpus, write_synthetic_corpus, SpecError, SynthSpec, SyntheticCorpus,
};
pub use toy::{
    compare_conditions, layer_norm, run_toy, run_toy_experiment, simulate_run, truth_direction, Condition, ToyConfig,
    ToyError, ToyExperimentSummary, ToyTrajectory, CALIBRATED_ALPHA, CALIBRATED_WEIGHT_SCALE,
};
