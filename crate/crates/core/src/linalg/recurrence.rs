// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sign-change counting and autoregressive recurrence fitting.

use nalgebra::{DMatrix, DVector};

use super::LinalgError;

/// Order 4 is the largest order for which zero-reachability of linear
/// recurrences is classically decidable.
pub const DEFAULT_AR_ORDER: usize = 4;
/// Half-width of the band around the unit circle counted as "near-unit" roots.
pub const DEFAULT_DELTA_UNIT: f64 = 0.05;

const RIDGE_SCALE: f64 = 1e-6;
const RCOND: f64 = 1e-9;

/// Counts adjacent strict sign reversals.
///
/// Exact zeros inherit the previous nonzero sign and a leading run of zeros is
/// skipped, so a single zero sample between two values of opposite sign counts
/// as one crossing.
pub fn zero_crossings(series: &[f64]) -> usize {
    let mut last = 0i8;
    let mut count = 0;
    for &x in series {
        let s = if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        };
        if s == 0 {
            continue;
        }
        if last != 0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}

/// Least-squares AR(p) fit and the root structure of the fitted recurrence
/// `u_n = c_1 u_{n-1} + ... + c_p u_{n-p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ARFit {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub residual_rms: f64,
    /// Moduli of the companion-matrix eigenvalues, descending.
    pub root_magnitudes: Vec<f64>,
    /// Sign reversals of the recurrence run forward `len(series)` steps from the last `p` observations.
    pub predicted_zero_crossings: usize,
    /// Sign of the last extrapolated value.
    pub final_sign: i8,
    pub near_unit_root_count: usize,
    /// Mean per-step log change of RMS amplitude over the extrapolation window.
    pub amplitude_decay: f64,
    /// Set when the normal equations were singular and the ridge fallback was used.
    pub ridge: bool,
}

impl ARFit {
    pub fn max_root_magnitude(&self) -> f64 {
        self.root_magnitudes[0]
    }

    pub fn min_root_magnitude(&self) -> f64 {
        *self.root_magnitudes.last().unwrap()
    }
}

pub fn fit_ar(series: &[f64], order: usize) -> Result<ARFit, LinalgError> {
    fit_ar_with(series, order, DEFAULT_DELTA_UNIT)
}

pub fn fit_ar_with(series: &[f64], order: usize, delta_unit: f64) -> Result<ARFit, LinalgError> {
    if order == 0 {
        return Err(LinalgError::InvalidOrder);
    }
    let needed = 2 * order + 1;
    if series.len() < needed {
        return Err(LinalgError::TooShort { len: series.len(), needed });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let p = order;
    let rows = series.len() - p;
    let design = DMatrix::from_fn(rows, p, |i, k| series[p + i - 1 - k]);
    let target = DVector::from_iterator(rows, series[p..].iter().copied());

    let svd = design.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let s = &svd.singular_values;
    let s_max = s.iter().fold(0.0f64, |m, &x| m.max(x));
    let s_min = s.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let ridge = s_max == 0.0 || s_min <= RCOND * s_max;
    // lambda = 1e-6 * trace(X^T X) / p
    let lambda = if ridge { RIDGE_SCALE * s.iter().map(|x| x * x).sum::<f64>() / p as f64 } else { 0.0 };
    let uty = u.transpose() * &target;
    let mut coef = DVector::zeros(p);
    for i in 0..s.len() {
        let si = s[i];
        let f = if ridge {
            if lambda > 0.0 {
                si / (si * si + lambda)
            } else {
                0.0
            }
        } else {
            1.0 / si
        };
        coef += vt.row(i).transpose() * (f * uty[i]);
    }
    let resid = &target - &design * &coef;
    let residual_rms = (resid.norm_squared() / rows as f64).sqrt();
    let coefficients: Vec<f64> = coef.iter().copied().collect();

    let root_magnitudes = companion_root_moduli(&coefficients);
    let near_unit_root_count = root_magnitudes.iter().filter(|&&m| (m - 1.0).abs() <= delta_unit).count();

    let (predicted_zero_crossings, final_sign, amplitude_decay) = extrapolate(series, &coefficients);

    Ok(ARFit {
        order: p,
        coefficients,
        residual_rms,
        root_magnitudes,
        predicted_zero_crossings,
        final_sign,
        near_unit_root_count,
        amplitude_decay,
        ridge,
    })
}

fn companion_root_moduli(coef: &[f64]) -> Vec<f64> {
    let p = coef.len();
    let mut roots: Vec<f64> = if p == 1 {
        vec![coef[0].abs()]
    } else {
        let mut c = DMatrix::zeros(p, p);
        for (k, &ck) in coef.iter().enumerate() {
            c[(0, k)] = ck;
        }
        for i in 1..p {
            c[(i, i - 1)] = 1.0;
        }
        c.complex_eigenvalues().iter().map(|z| z.norm()).collect()
    };
    roots.sort_by(|a, b| b.total_cmp(a));
    roots
}

fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Runs the recurrence forward. The window is rescaled whenever it grows
/// large; the recurrence is homogeneous, so signs are unaffected and the
/// discarded scale is tracked in log space.
fn extrapolate(series: &[f64], coef: &[f64]) -> (usize, i8, f64) {
    let p = coef.len();
    let steps = series.len();
    let mut window: Vec<f64> = series[series.len() - p..].to_vec();
    let start_rms = rms(&window);
    let mut log_scale = 0.0f64;
    let mut crossings = 0usize;
    let mut last_sign = 0i8;
    let mut final_sign = 0i8;
    for _ in 0..steps {
        // window[p-1] is the most recent value
        let next: f64 = (0..p).map(|k| coef[k] * window[p - 1 - k]).sum();
        window.remove(0);
        window.push(next);
        let big = window.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if big > 1e100 {
            window.iter_mut().for_each(|x| *x /= big);
            log_scale += big.ln();
        }
        let s = if next > 0.0 {
            1
        } else if next < 0.0 {
            -1
        } else {
            0
        };
        final_sign = s;
        if s != 0 {
            if last_sign != 0 && s != last_sign {
                crossings += 1;
            }
            last_sign = s;
        }
    }
    let decay = if start_rms > 0.0 {
        let end = rms(&window).max(f64::MIN_POSITIVE).ln() + log_scale;
        (end - start_rms.ln()) / steps as f64
    } else {
        0.0
    };
    (crossings, final_sign, decay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn crossings_examples() {
        assert_eq!(zero_crossings(&[1.0, -1.0, 1.0, -1.0]), 3);
        assert_eq!(zero_crossings(&[1.0, 2.0, 3.0]), 0);
        assert_eq!(zero_crossings(&[1.0, 0.0, -1.0]), 1);
        assert_eq!(zero_crossings(&[0.0, 0.0, -1.0, 0.0, 2.0]), 1);
        assert_eq!(zero_crossings(&[0.0, 0.0]), 0);
    }

    #[test]
    fn exact_ar1_decay() {
        let series: Vec<f64> = (0..20).map(|n| 0.5f64.powi(n)).collect();
        let fit = fit_ar(&series, 1).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.root_magnitudes[0], 0.5, epsilon = 1e-12);
        assert!(fit.residual_rms <= 1e-9);
        assert!(!fit.ridge);
        assert_eq!(fit.predicted_zero_crossings, 0);
        assert_eq!(fit.final_sign, 1);
        assert_abs_diff_eq!(fit.amplitude_decay, 0.5f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn alternating_unit_root() {
        let series: Vec<f64> = (0..12).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let fit = fit_ar(&series, 1).unwrap();
        assert_abs_diff_eq!(fit.root_magnitudes[0], 1.0, epsilon = 1e-12);
        assert_eq!(fit.near_unit_root_count, 1);
        assert_eq!(fit.predicted_zero_crossings, 11);
    }

    #[test]
    fn ar2_against_hand_normal_equations() {
        let mut u = vec![1.0, 0.3];
        for n in 2..40 {
            u.push(0.9 * u[n - 1] - 0.5 * u[n - 2]);
        }
        // hand-assembled 2x2 normal equations
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for n in 2..u.len() {
            let (x1, x2, y) = (u[n - 1], u[n - 2], u[n]);
            a11 += x1 * x1;
            a12 += x1 * x2;
            a22 += x2 * x2;
            b1 += x1 * y;
            b2 += x2 * y;
        }
        let det = a11 * a22 - a12 * a12;
        let hand = [(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det];
        let fit = fit_ar(&u, 2).unwrap();
        assert_abs_diff_eq!(fit.coefficients.as_slice(), hand.as_slice(), epsilon = 1e-6);
        assert_abs_diff_eq!(fit.coefficients.as_slice(), [0.9, -0.5].as_slice(), epsilon = 1e-6);
        // complex pair with |z|^2 = 0.5
        assert_abs_diff_eq!(fit.root_magnitudes[0], 0.5f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn constant_series_uses_ridge_and_stays_finite() {
        let fit = fit_ar(&[2.0; 12], 4).unwrap();
        assert!(fit.ridge);
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
        assert_eq!(fit.final_sign, 1);
        assert_eq!(fit.predicted_zero_crossings, 0);
        let zero = fit_ar(&[0.0; 9], 4).unwrap();
        assert!(zero.ridge);
        assert_eq!(zero.coefficients, vec![0.0; 4]);
        assert_eq!(zero.final_sign, 0);
    }

    #[test]
    fn errors() {
        assert_eq!(fit_ar(&[1.0; 8], 4), Err(LinalgError::TooShort { len: 8, needed: 9 }));
        assert_eq!(fit_ar(&[1.0; 8], 0), Err(LinalgError::InvalidOrder));
    }

    #[test]
    fn explosive_extrapolation_stays_finite() {
        let series: Vec<f64> = (0..30).map(|n| (-3.0f64).powi(n)).collect();
        let fit = fit_ar(&series, 1).unwrap();
        assert_eq!(fit.predicted_zero_crossings, 29);
        assert!(fit.amplitude_decay.is_finite());
        assert_abs_diff_eq!(fit.amplitude_decay, 3f64.ln(), epsilon = 1e-6);
    }
}
