// SPDX-License-Identifier: MIT OR Apache-2.0

//! Grid calibration of the toy network's free constants.

use serde::Serialize;

use super::toy::{run_toy_experiment, ToyConfig, ToyError, ToyExperimentSummary};

/// Target signatures the toy network is calibrated against.
pub const TARGET_RATIO: f64 = 3.6;
pub const TARGET_D: f64 = 0.99;
pub const TARGET_RHO: f64 = 1.2;

/// Acceptance bands; a cell is eligible only if it lies inside all of them.
pub const RATIO_BAND: (f64, f64) = (3.0, 4.2);
pub const D_BAND: (f64, f64) = (0.79, 1.19);
pub const RHO_BAND: (f64, f64) = (1.05, 1.35);
pub const P_MAX: f64 = 1e-20;

/// Grid the shipped defaults were chosen from.
pub const CALIBRATION_GRID: (&[f64], &[f64]) = (&[0.32, 0.33, 0.34, 0.35, 0.36], &[0.145, 0.15, 0.155, 0.16, 0.165]);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationCell {
    pub weight_scale: f64,
    pub alpha: f64,
    pub crossing_ratio: f64,
    pub cohens_d: f64,
    pub p_value: f64,
    pub rho_closing: f64,
    pub rho_nonclosing: f64,
    pub in_bands: bool,
    /// `|d - TARGET_D|`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub cells: Vec<CalibrationCell>,
    /// Index of the selected cell: the in-band cell whose d is closest to `TARGET_D`.
    pub selected: Option<usize>,
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&x)
}

fn cell(s: &ToyExperimentSummary) -> CalibrationCell {
    let distance = (s.cohens_d - TARGET_D).abs();
    CalibrationCell {
        weight_scale: s.config.weight_scale,
        alpha: s.config.alpha,
        crossing_ratio: s.crossing_ratio,
        cohens_d: s.cohens_d,
        p_value: s.p_value,
        rho_closing: s.rho_first,
        rho_nonclosing: s.rho_second,
        in_bands: within(s.crossing_ratio, RATIO_BAND)
            && within(s.cohens_d, D_BAND)
            && within(s.rho_first, RHO_BAND)
            && within(s.rho_second, RHO_BAND)
            && s.p_value < P_MAX,
        distance,
    }
}

/// Evaluates every `(weight_scale, alpha)` cell with the other settings of `base`.
pub fn calibrate(base: &ToyConfig, weight_scales: &[f64], alphas: &[f64]) -> Result<Calibration, ToyError> {
    let mut cells = Vec::new();
    for &weight_scale in weight_scales {
        for &alpha in alphas {
            let cfg = ToyConfig { weight_scale, alpha, ..base.clone() };
            cells.push(cell(&run_toy_experiment(&cfg)?));
        }
    }
    let selected = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.in_bands)
        .min_by(|a, b| a.1.distance.total_cmp(&b.1.distance))
        .map(|(i, _)| i);
    Ok(Calibration { cells, selected })
}
