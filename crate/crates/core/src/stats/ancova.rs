// SPDX-License-Identifier: MIT OR Apache-2.0

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{t_two_sided_p, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AncovaFit {
    pub intercept: f64,
    pub group_effect: f64,
    pub covariate_slope: f64,
    pub t: f64,
    /// Two-sided p for the group coefficient, `n - 3` degrees of freedom.
    pub p: f64,
}

/// Least-squares fit of `y = b0 + b1 * group + b2 * covariate`; tests `b1 = 0`.
pub fn ancova_group_p(y: &[f64], group: &[bool], covariate: &[f64]) -> Result<AncovaFit, StatsError> {
    let n = y.len();
    if group.len() != n || covariate.len() != n {
        return Err(StatsError::LengthMismatch(format!("{n}, {}, {}", group.len(), covariate.len())));
    }
    if n < 4 {
        return Err(StatsError::TooFew { needed: 4, got: n });
    }
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => f64::from(u8::from(group[i])),
        _ => covariate[i],
    });
    let sv = x.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(StatsError::RankDeficient);
    }
    let yv = DVector::from_column_slice(y);
    let gram = x.transpose() * &x;
    let inv = gram.try_inverse().ok_or(StatsError::RankDeficient)?;
    let beta = &inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let df = (n - 3) as f64;
    let sigma2 = resid.norm_squared() / df;
    let se = (sigma2 * inv[(1, 1)]).sqrt();
    let (t, p) = if se > 0.0 {
        let t = beta[1] / se;
        (t, t_two_sided_p(t, df))
    } else if beta[1] != 0.0 {
        (f64::INFINITY.copysign(beta[1]), 0.0)
    } else {
        (0.0, 1.0)
    };
    Ok(AncovaFit { intercept: beta[0], group_effect: beta[1], covariate_slope: beta[2], t, p })
}
