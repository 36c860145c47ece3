// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::DMatrix;

use super::LinalgError;

/// Singular values in descending order, length `min(m, n)`.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>, LinalgError> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let mut sv: Vec<f64> = m.singular_values().iter().map(|s| s.max(0.0)).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

fn check_spectrum(sv: &[f64]) -> Result<f64, LinalgError> {
    if sv.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if sv.iter().any(|&x| x < 0.0) {
        return Err(LinalgError::NegativeEntry);
    }
    let total: f64 = sv.iter().sum();
    if total <= 0.0 {
        return Err(LinalgError::AllZero);
    }
    Ok(total)
}

/// Shannon entropy (nats) of the spectrum normalized to unit sum.
pub fn spectral_entropy(sv: &[f64]) -> Result<f64, LinalgError> {
    let total = check_spectrum(sv)?;
    let h = sv.iter().map(|&s| s / total).filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum::<f64>();
    Ok(h.clamp(0.0, (sv.len() as f64).ln()))
}

/// `exp` of the spectral entropy; lies in `[1, n]`.
pub fn effective_rank(sv: &[f64]) -> Result<f64, LinalgError> {
    Ok(spectral_entropy(sv)?.exp().clamp(1.0, sv.len() as f64))
}

/// `(sum v^2)^2 / sum v^4`; lies in `[1, dim]`.
pub fn participation_ratio(v: &[f64]) -> Result<f64, LinalgError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    // rescale by the max magnitude so fourth powers cannot overflow or underflow
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Err(LinalgError::AllZero);
    }
    let (s2, s4) = v.iter().fold((0.0, 0.0), |(a, b), x| {
        let y = (x / scale).powi(2);
        (a + y, b + y * y)
    });
    Ok((s2 * s2 / s4).clamp(1.0, v.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_and_diagonal() {
        let sv = singular_values(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(sv.len(), 3);
        sv.iter().for_each(|&s| assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let sv = singular_values(&d).unwrap();
        assert_abs_diff_eq!(sv.as_slice(), [3.0, 2.0, 1.0].as_slice(), epsilon = 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert_eq!(singular_values(&m), Err(LinalgError::NonFinite));
    }

    #[test]
    fn entropy_examples() {
        assert_abs_diff_eq!(spectral_entropy(&[1.0; 4]).unwrap(), 4f64.ln(), epsilon = 1e-12);
        assert_eq!(spectral_entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        // -(0.8 ln 0.8 + 0.2 ln 0.2)
        assert_abs_diff_eq!(spectral_entropy(&[0.8, 0.2]).unwrap(), 0.500402, epsilon = 1e-6);
        assert_eq!(spectral_entropy(&[0.0, 0.0]), Err(LinalgError::AllZero));
    }

    #[test]
    fn effective_rank_examples() {
        assert_abs_diff_eq!(effective_rank(&[1.0; 4]).unwrap(), 4.0, epsilon = 1e-12);
        assert_eq!(effective_rank(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
        let h: f64 = -(0.8f64 * 0.8f64.ln() + 0.2 * 0.2f64.ln());
        assert_abs_diff_eq!(effective_rank(&[0.8, 0.2]).unwrap(), h.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(effective_rank(&[0.8, 0.2]).unwrap(), 1.649385, epsilon = 1e-6);
    }

    #[test]
    fn participation_examples() {
        let mut onehot = vec![0.0; 8];
        onehot[3] = -2.5;
        assert_abs_diff_eq!(participation_ratio(&onehot).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(participation_ratio(&[0.7; 8]).unwrap(), 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(participation_ratio(&[1.0, 1.0, 0.0, 0.0]).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(participation_ratio(&[0.0; 3]), Err(LinalgError::AllZero));
    }
}
