// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::DMatrix;

use super::{singular_values, LinalgError};

const RIDGE_SCALE: f64 = 1e-6;
const RCOND: f64 = 1e-10;

/// Least-squares transition operator between two layer states.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorFit {
    /// Singular values of `T`, descending.
    pub singular_values: Vec<f64>,
    /// Set when `H_from^T H_from` was singular or ill-conditioned (always the
    /// case when there are fewer rows than columns) and ridge was applied.
    pub ridge: bool,
}

impl OperatorFit {
    pub fn top(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

/// Fits `T` minimizing `|H_from T - H_to|_F` and returns its spectrum.
///
/// Works through the thin SVD `H_from = U S V^T`: `T = V diag(f) U^T H_to`
/// with `f = 1/s`, or `s / (s^2 + lambda)` under the ridge fallback
/// (`lambda = 1e-6 trace(Gram) / d`). As `V` has orthonormal columns, the
/// spectrum of `T` is the spectrum of the small `r x d` factor
/// `diag(f) U^T H_to`, and the `d x d` operator is never formed.
pub fn transition_operator(h_from: &DMatrix<f64>, h_to: &DMatrix<f64>) -> Result<OperatorFit, LinalgError> {
    if h_from.shape() != h_to.shape() {
        return Err(LinalgError::ShapeMismatch(format!("{:?} vs {:?}", h_from.shape(), h_to.shape())));
    }
    let (t, d) = h_from.shape();
    if t < 2 {
        return Err(LinalgError::DegenerateInput("transition operator needs at least two token positions"));
    }
    if h_from.iter().chain(h_to.iter()).any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if h_from.iter().all(|&x| x == 0.0) {
        return Err(LinalgError::DegenerateInput("source state is identically zero"));
    }
    let svd = h_from.clone().svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let s = &svd.singular_values;
    let s_max = s.iter().fold(0.0f64, |m, &x| m.max(x));
    let s_min = s.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let ridge = t < d || s_min <= RCOND * s_max;
    let lambda = if ridge { RIDGE_SCALE * s.iter().map(|x| x * x).sum::<f64>() / d as f64 } else { 0.0 };
    let mut factor = u.transpose() * h_to;
    for (i, mut row) in factor.row_iter_mut().enumerate() {
        let si = s[i];
        let f = if ridge { si / (si * si + lambda) } else { 1.0 / si };
        row *= f;
    }
    Ok(OperatorFit { singular_values: singular_values(&factor)?, ridge })
}

/// Top singular value of the least-squares transition operator.
pub fn transition_operator_top_sv(h_from: &DMatrix<f64>, h_to: &DMatrix<f64>) -> Result<f64, LinalgError> {
    transition_operator(h_from, h_to).map(|fit| fit.top())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use approx::assert_abs_diff_eq;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut r = CounterRng::new(seed, 9);
        DMatrix::from_fn(rows, cols, |_, _| r.normal())
    }

    #[test]
    fn identity_and_scalar_maps() {
        let h = random(10, 4, 1);
        assert_abs_diff_eq!(transition_operator_top_sv(&h, &h).unwrap(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(transition_operator_top_sv(&h, &(&h * 2.0)).unwrap(), 2.0, epsilon = 1e-6);
        assert!(!transition_operator(&h, &h).unwrap().ridge);
    }

    #[test]
    fn rotated_diagonal_map() {
        let h = random(16, 4, 2);
        let q = random(4, 4, 3).qr().q();
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 1.0, 1.0]));
        let a = &q * diag * q.transpose();
        let fit = transition_operator(&h, &(&h * &a)).unwrap();
        assert_abs_diff_eq!(fit.top(), 3.0, epsilon = 1e-5);
        assert_abs_diff_eq!(fit.singular_values[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn wide_input_takes_ridge_path() {
        let h = random(3, 8, 4);
        let fit = transition_operator(&h, &h).unwrap();
        assert!(fit.ridge);
        assert!((fit.top() - 1.0).abs() < 1e-5);
        assert_eq!(fit.singular_values.len(), 3);
    }

    #[test]
    fn degenerate_inputs() {
        let z = DMatrix::zeros(4, 3);
        assert!(matches!(transition_operator(&z, &z), Err(LinalgError::DegenerateInput(_))));
        let one = random(1, 3, 5);
        assert!(transition_operator(&one, &one).is_err());
    }
}
