// SPDX-License-Identifier: MIT OR Apache-2.0

//! Toy residual network with a closing or alternating truth bias.
//!
//! `h_{l+1} = LN(h_l + W_l h_l + b_l)` with i.i.d. Gaussian `W_l` of scale `s / sqrt(d)`,
//! a fixed zero-mean unit direction `v`, and `tau_l = <h_l, v>`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::zero_crossings;
use crate::rng::CounterRng;
use crate::stats::{cohens_d, welch_p, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Condition {
    /// `b_l = +alpha v` at every layer.
    Closing,
    /// `b_l = (-1)^l alpha v`.
    Nonclosing,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::Closing => "CLOSING",
            Condition::Nonclosing => "NONCLOSING",
        }
    }

    fn bias_sign(self, layer: usize) -> f64 {
        match self {
            Condition::Closing => 1.0,
            Condition::Nonclosing if layer.is_multiple_of(2) => 1.0,
            Condition::Nonclosing => -1.0,
        }
    }
}

/// Weight scale and bias magnitude chosen by [`calibrate`](super::calibrate) on the default
/// grid; see `CALIBRATION_GRID`.
pub const CALIBRATED_WEIGHT_SCALE: f64 = 0.33;
pub const CALIBRATED_ALPHA: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub layers: usize,
    pub width: usize,
    pub runs: usize,
    pub weight_scale: f64,
    pub alpha: f64,
    pub seed: u64,
    pub condition: Condition,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            layers: 40,
            width: 64,
            runs: 500,
            weight_scale: CALIBRATED_WEIGHT_SCALE,
            alpha: CALIBRATED_ALPHA,
            seed: 1,
            condition: Condition::Nonclosing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToyError {
    #[error("invalid toy configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl ToyConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        if self.layers < 2 {
            return Err(ToyError::Config("layers must be at least 2"));
        }
        if self.width < 2 {
            return Err(ToyError::Config("width must be at least 2"));
        }
        if self.runs < 2 {
            return Err(ToyError::Config("runs must be at least 2"));
        }
        if !(self.alpha > 0.0) {
            return Err(ToyError::Config("alpha must be positive"));
        }
        if !(self.weight_scale >= 0.0) {
            return Err(ToyError::Config("weight scale must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyTrajectory {
    pub truth_delta: Vec<f64>,
    /// `|h_l + W_l h_l + b_l| / |h_l|` before normalization, per layer.
    pub prenorm_growth: Vec<f64>,
    pub zero_crossing_count: usize,
    pub condition: Condition,
}

/// Zero mean and unit RMS over dimensions.
pub fn layer_norm(x: &mut [f64]) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter_mut().for_each(|v| *v -= m);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The experiment-wide truth direction: zero mean (so normalization keeps it) and unit norm.
pub fn truth_direction(cfg: &ToyConfig) -> Vec<f64> {
    let mut rng = CounterRng::new(cfg.seed, 0);
    let mut v: Vec<f64> = (0..cfg.width).map(|_| rng.normal()).collect();
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

struct State {
    h: Vec<f64>,
    tau: Vec<f64>,
    growth: Vec<f64>,
    condition: Condition,
}

impl State {
    fn new(h0: &[f64], v: &[f64], condition: Condition, layers: usize) -> Self {
        let mut tau = Vec::with_capacity(layers + 1);
        tau.push(dot(h0, v));
        State { h: h0.to_vec(), tau, growth: Vec::with_capacity(layers), condition }
    }

    fn step(&mut self, w: &[f64], v: &[f64], alpha: f64, layer: usize, buf: &mut [f64]) {
        let d = self.h.len();
        let b = alpha * self.condition.bias_sign(layer);
        for i in 0..d {
            buf[i] = self.h[i] + dot(&w[i * d..(i + 1) * d], &self.h) + b * v[i];
        }
        self.growth.push(norm(buf) / norm(&self.h));
        self.h.copy_from_slice(buf);
        layer_norm(&mut self.h);
        self.tau.push(dot(&self.h, v));
    }

    fn finish(self) -> ToyTrajectory {
        ToyTrajectory {
            zero_crossing_count: zero_crossings(&self.tau),
            truth_delta: self.tau,
            prenorm_growth: self.growth,
            condition: self.condition,
        }
    }
}

/// Simulates run `run` under each listed condition. Every condition sees the same
/// initial state and weights, drawn once from the run's stream.
pub fn simulate_run(cfg: &ToyConfig, v: &[f64], run: usize, conditions: &[Condition]) -> Vec<ToyTrajectory> {
    let d = cfg.width;
    let mut rng = CounterRng::new(cfg.seed, 1 + run as u64);
    let mut h0: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    layer_norm(&mut h0);
    let mut states: Vec<State> = conditions.iter().map(|&c| State::new(&h0, v, c, cfg.layers)).collect();
    let scale = cfg.weight_scale / (d as f64).sqrt();
    let mut w = vec![0.0; d * d];
    let mut buf = vec![0.0; d];
    for layer in 0..cfg.layers {
        w.iter_mut().for_each(|x| *x = scale * rng.normal());
        for s in &mut states {
            s.step(&w, v, cfg.alpha, layer, &mut buf);
        }
    }
    states.into_iter().map(State::finish).collect()
}

/// One trajectory of run 0 under `cfg.condition`.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyTrajectory, ToyError> {
    cfg.validate()?;
    let v = truth_direction(cfg);
    Ok(simulate_run(cfg, &v, 0, &[cfg.condition]).remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyExperimentSummary {
    pub config: ToyConfig,
    pub first: Condition,
    pub second: Condition,
    pub mean_crossings_first: f64,
    pub mean_crossings_second: f64,
    /// `mean_crossings_second / mean_crossings_first`.
    pub crossing_ratio: f64,
    /// Cohen's d of second versus first.
    pub cohens_d: f64,
    pub p_value: f64,
    pub rho_first: f64,
    pub rho_second: f64,
    /// Fraction of paired runs where the second condition crosses strictly more often.
    pub paired_second_greater: f64,
    pub crossings_first: Vec<usize>,
    pub crossings_second: Vec<usize>,
}

/// Runs `cfg.runs` paired trajectories under `first` and `second` and compares crossing counts.
pub fn compare_conditions(
    cfg: &ToyConfig,
    first: Condition,
    second: Condition,
) -> Result<ToyExperimentSummary, ToyError> {
    cfg.validate()?;
    let v = truth_direction(cfg);
    let pairs: Vec<(ToyTrajectory, ToyTrajectory)> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut t = simulate_run(cfg, &v, run, &[first, second]);
            let b = t.pop().unwrap();
            (t.pop().unwrap(), b)
        })
        .collect();
    let xa: Vec<usize> = pairs.iter().map(|(a, _)| a.zero_crossing_count).collect();
    let xb: Vec<usize> = pairs.iter().map(|(_, b)| b.zero_crossing_count).collect();
    let fa: Vec<f64> = xa.iter().map(|&x| x as f64).collect();
    let fb: Vec<f64> = xb.iter().map(|&x| x as f64).collect();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let rho = |sel: &dyn Fn(&(ToyTrajectory, ToyTrajectory)) -> &ToyTrajectory| {
        let all: Vec<f64> = pairs.iter().flat_map(|p| sel(p).prenorm_growth.iter().copied()).collect();
        mean(&all)
    };
    let (d, p) = if fa == fb { (0.0, 1.0) } else { (cohens_d(&fb, &fa)?, welch_p(&fb, &fa)?) };
    let (ma, mb) = (mean(&fa), mean(&fb));
    Ok(ToyExperimentSummary {
        config: cfg.clone(),
        first,
        second,
        mean_crossings_first: ma,
        mean_crossings_second: mb,
        crossing_ratio: if ma > 0.0 { mb / ma } else { f64::INFINITY },
        cohens_d: d,
        p_value: p,
        rho_first: rho(&|p| &p.0),
        rho_second: rho(&|p| &p.1),
        paired_second_greater: xa.iter().zip(&xb).filter(|(a, b)| b > a).count() as f64 / cfg.runs as f64,
        crossings_first: xa,
        crossings_second: xb,
    })
}

/// CLOSING versus NONCLOSING comparison; `cfg.condition` is ignored.
pub fn run_toy_experiment(cfg: &ToyConfig) -> Result<ToyExperimentSummary, ToyError> {
    compare_conditions(cfg, Condition::Closing, Condition::Nonclosing)
}
