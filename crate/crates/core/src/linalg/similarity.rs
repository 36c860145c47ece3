// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::DMatrix;

use super::LinalgError;

fn centered_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    &c * c.transpose()
}

/// Linear CKA between two representations of the same `n` samples (rows).
///
/// Uses the `n x n` Gram form `<K_x, K_y>_F / (|K_x|_F |K_y|_F)`, which equals
/// `|X^T Y|_F^2 / (|X^T X|_F |Y^T Y|_F)` for column-centered inputs and stays
/// cheap when the feature width exceeds the sample count.
pub fn linear_cka(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64, LinalgError> {
    if x.nrows() != y.nrows() {
        return Err(LinalgError::ShapeMismatch(format!("{} vs {} rows", x.nrows(), y.nrows())));
    }
    if x.nrows() < 2 {
        return Err(LinalgError::DegenerateInput("CKA needs at least two samples"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let kx = centered_gram(x);
    let ky = centered_gram(y);
    let nx = kx.norm();
    let ny = ky.norm();
    if nx == 0.0 || ny == 0.0 {
        return Err(LinalgError::DegenerateInput("centered representation is all zero"));
    }
    let num = kx.component_mul(&ky).sum();
    Ok((num / (nx * ny)).clamp(0.0, 1.0))
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use approx::assert_abs_diff_eq;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut r = CounterRng::new(seed, 0);
        DMatrix::from_fn(rows, cols, |_, _| r.normal())
    }

    #[test]
    fn self_and_scaled() {
        let x = random(10, 4, 1);
        assert_abs_diff_eq!(linear_cka(&x, &x).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(linear_cka(&x, &(&x * 2.0)).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_invariance() {
        let x = random(12, 5, 2);
        let q = random(5, 5, 3).qr().q();
        assert_abs_diff_eq!(linear_cka(&x, &(&x * q)).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn symmetric_and_bounded() {
        let x = random(9, 3, 4);
        let y = random(9, 6, 5);
        let a = linear_cka(&x, &y).unwrap();
        let b = linear_cka(&y, &x).unwrap();
        assert!((a - b).abs() <= 1e-12);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn degenerate() {
        let x = DMatrix::from_element(4, 3, 2.0);
        assert!(matches!(linear_cka(&x, &random(4, 3, 1)), Err(LinalgError::DegenerateInput(_))));
        assert!(linear_cka(&random(1, 3, 1), &random(1, 3, 2)).is_err());
    }

    #[test]
    fn cosine_basics() {
        assert_abs_diff_eq!(cosine(&[1.0, 2.0], &[2.0, 4.0]), 1.0, epsilon = 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }
}
