// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::corpus::ActivationRecord;
use crate::linalg::{fit_ar_with, mean, population_std, transition_operator_top_sv, zero_crossings, ARFit};

use super::{MetricsConfig, NullCause, Sink, SpectralSource};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ratios(norms: &[f64]) -> Result<Vec<f64>, NullCause> {
    if norms.len() < 2 {
        return Err(NullCause::TooShort("need at least two norms"));
    }
    if norms[..norms.len() - 1].iter().any(|&n| n <= 0.0) {
        return Err(NullCause::Degenerate("zero-norm state"));
    }
    Ok(norms.windows(2).map(|w| w[1] / w[0]).collect())
}

fn oscillations(ratios: &[f64]) -> f64 {
    let shifted: Vec<f64> = ratios.iter().map(|r| r - 1.0).collect();
    zero_crossings(&shifted) as f64
}

pub(crate) fn mortality(r: &ActivationRecord, cfg: &MetricsConfig, sink: &mut Sink) {
    let norms: Vec<f64> = (0..=r.layers()).map(|l| norm(&r.last_token_hidden(l))).collect();
    let eps = cfg.eps_mortality;
    match ratios(&norms) {
        Ok(rs) => {
            let n = rs.len() as f64;
            let frac = |pred: &dyn Fn(f64) -> bool| rs.iter().filter(|&&x| pred(x)).count() as f64 / n;
            sink.put("mortality_mean_contraction", Ok(mean(&rs)));
            sink.put("mortality_std_contraction", Ok(population_std(&rs)));
            sink.put("mortality_contractive_frac", Ok(frac(&|x| x < 1.0 - eps)));
            sink.put("mortality_expansive_frac", Ok(frac(&|x| x > 1.0 + eps)));
            sink.put("mortality_near_critical_frac", Ok(frac(&|x| (x - 1.0).abs() <= eps)));
            sink.put("mortality_oscillation_count", Ok(oscillations(&rs)));
            sink.put("mortality_final_displacement", Ok(norms[norms.len() - 1] / norms[0]));
        }
        Err(c) => sink.null_all(
            &[
                "mortality_mean_contraction",
                "mortality_std_contraction",
                "mortality_contractive_frac",
                "mortality_expansive_frac",
                "mortality_near_critical_frac",
                "mortality_oscillation_count",
                "mortality_final_displacement",
            ],
            c,
        ),
    }

    let ar: Vec<f64> = r.ar_hidden_norms.to_f64();
    match ratios(&ar) {
        Ok(rs) => {
            sink.put("ar_mortality_mean_contraction", Ok(mean(&rs)));
            sink.put("ar_mortality_oscillations", Ok(oscillations(&rs)));
            sink.put("ar_mortality_final_displacement", Ok(ar[ar.len() - 1] / ar[0]));
        }
        Err(c) => sink.null_all(
            &["ar_mortality_mean_contraction", "ar_mortality_oscillations", "ar_mortality_final_displacement"],
            c,
        ),
    }
}

/// AR order used for a series of length `n`: the configured cap, reduced so the fit is identified.
pub(crate) fn ar_order_for(n: usize, cap: usize) -> usize {
    cap.min(n.saturating_sub(1) / 2)
}

fn fit(series: &[f64], cfg: &MetricsConfig) -> Result<ARFit, NullCause> {
    if series.len() < 3 {
        return Err(NullCause::TooShort("AR fit needs at least 3 values"));
    }
    Ok(fit_ar_with(series, ar_order_for(series.len(), cfg.ar_order), cfg.delta_unit)?)
}

fn delta_stats(sink: &mut Sink, names: [&'static str; 3], tau: &[f64]) {
    let (lo, hi) = tau.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    sink.put(names[0], Ok(zero_crossings(tau) as f64));
    sink.put(names[1], Ok(hi - lo));
    sink.put(names[2], Ok(tau[tau.len() - 1]));
}

const SKOLEM: [&str; 9] = [
    "skolem_zero_crossings",
    "skolem_max_root_magnitude",
    "skolem_min_root_magnitude",
    "skolem_amplitude_decay",
    "skolem_fit_error",
    "skolem_lead_coefficient",
    "skolem_coefficient_norm",
    "skolem_final_sign",
    "skolem_unit_circle_roots",
];

const LAST_SKOLEM: [&str; 8] = [
    "last_token_skolem_zero_crossings",
    "last_token_skolem_max_root_magnitude",
    "last_token_skolem_amplitude_decay",
    "last_token_skolem_fit_error",
    "last_token_skolem_lead_coefficient",
    "last_token_skolem_coefficient_norm",
    "last_token_skolem_final_sign",
    "last_token_skolem_unit_circle_roots",
];

const AR_SKOLEM: [&str; 4] =
    ["ar_skolem_zero_crossings", "ar_skolem_max_root_magnitude", "ar_skolem_fit_error", "ar_skolem_unit_circle_roots"];

const DELTA: [&str; 3] = ["truth_delta_zero_crossings", "truth_delta_range", "truth_delta_final"];
const LAST_DELTA: [&str; 3] =
    ["truth_delta_last_token_zero_crossings", "truth_delta_last_token_range", "truth_delta_last_token_final"];

/// Value of a named field of an AR fit, keyed by the metric-name suffix.
fn skolem_field(f: &ARFit, suffix: &str) -> f64 {
    match suffix {
        "zero_crossings" => f.predicted_zero_crossings as f64,
        "max_root_magnitude" => f.max_root_magnitude(),
        "min_root_magnitude" => f.min_root_magnitude(),
        "amplitude_decay" => f.amplitude_decay,
        "fit_error" => f.residual_rms,
        "lead_coefficient" => f.coefficients[0],
        "coefficient_norm" => f.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt(),
        "final_sign" => f.final_sign as f64,
        "unit_circle_roots" => f.near_unit_root_count as f64,
        other => unreachable!("unknown AR field {other}"),
    }
}

fn put_skolem(
    sink: &mut Sink,
    names: &[&'static str],
    prefix: &str,
    series: Result<&[f64], NullCause>,
    cfg: &MetricsConfig,
) {
    match series.and_then(|s| fit(s, cfg)) {
        Ok(f) => {
            for n in names {
                sink.put(n, Ok(skolem_field(&f, &n[prefix.len()..])));
            }
        }
        Err(c) => sink.null_all(names, c),
    }
}

/// Truth-delta trajectory `tau_l = <h_l, v_T - v_F>` at the final prompt token.
pub fn truth_delta(r: &ActivationRecord) -> Option<Vec<f64>> {
    let dir = truth_direction(r)?;
    Some((0..=r.layers()).map(|l| dot(&r.last_token_hidden(l), &dir)).collect())
}

/// Truth-delta trajectory at the final generated token, when those states were captured.
pub fn last_token_truth_delta(r: &ActivationRecord) -> Option<Vec<f64>> {
    let dir = truth_direction(r)?;
    let states = r.last_token_states.as_ref()?;
    Some((0..=r.layers()).map(|l| dot(&states.row(&[], l), &dir)).collect())
}

fn truth_direction(r: &ActivationRecord) -> Option<Vec<f64>> {
    let dirs = r.unembed_truth_dirs.as_ref()?;
    let (vt, vf) = (dirs.row(&[], 0), dirs.row(&[], 1));
    Some(vt.iter().zip(&vf).map(|(a, b)| a - b).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn truth_skolem(r: &ActivationRecord, cfg: &MetricsConfig, sink: &mut Sink) {
    let missing_dirs = NullCause::MissingInput("unembed_truth_dirs");
    match truth_delta(r) {
        Some(tau) => {
            delta_stats(sink, DELTA, &tau);
            let diffs: Vec<f64> = tau.windows(2).map(|w| w[1] - w[0]).collect();
            sink.put("truth_total_winding_number", Ok(zero_crossings(&diffs) as f64));
            put_skolem(sink, &SKOLEM, "skolem_", Ok(&tau), cfg);
        }
        None => {
            sink.null_all(&DELTA, missing_dirs.clone());
            sink.put("truth_total_winding_number", Err(missing_dirs.clone()));
            sink.null_all(&SKOLEM, missing_dirs.clone());
        }
    }

    let last = last_token_truth_delta(r);
    let last_cause =
        if r.unembed_truth_dirs.is_none() { missing_dirs } else { NullCause::MissingInput("last_token_states") };
    match &last {
        Some(tau) => delta_stats(sink, LAST_DELTA, tau),
        None => sink.null_all(&LAST_DELTA, last_cause.clone()),
    }
    put_skolem(sink, &LAST_SKOLEM, "last_token_skolem_", last.as_deref().ok_or(last_cause), cfg);

    let ar = r.ar_truth_delta.as_ref().map(|t| t.to_f64());
    put_skolem(sink, &AR_SKOLEM, "ar_skolem_", ar.as_deref().ok_or(NullCause::MissingInput("ar_truth_delta")), cfg);
}

/// Per-layer `sigma_1(J_l)` from the record, exact when supplied and proxied otherwise.
pub fn layer_top_sv(r: &ActivationRecord) -> (Vec<f64>, SpectralSource) {
    match &r.jacobian_top_sv {
        Some(t) => (t.to_f64(), SpectralSource::Exact),
        None => {
            let sv = (0..r.layers())
                .map(|l| transition_operator_top_sv(&r.hidden(l), &r.hidden(l + 1)).unwrap_or(f64::NAN))
                .collect();
            (sv, SpectralSource::Proxy)
        }
    }
}

pub(crate) fn spectral(r: &ActivationRecord, cfg: &MetricsConfig, sink: &mut Sink) -> (SpectralSource, usize) {
    let (sv, source) = layer_top_sv(r);
    let logs: Vec<f64> = sv.iter().filter(|s| s.is_finite() && **s > 0.0).map(|s| s.ln()).collect();
    let skipped = sv.len() - logs.len();
    const NAMES: [&str; 6] = [
        "spectral_lyapunov_exponent",
        "spectral_growth",
        "spectral_distance_to_criticality",
        "spectral_critical_fraction",
        "spectral_max_log_sv",
        "spectral_std_log_sv",
    ];
    if logs.is_empty() {
        sink.null_all(&NAMES, NullCause::Degenerate("no layer with positive sigma_1"));
        return (source, skipped);
    }
    let lambda = mean(&logs);
    sink.put(NAMES[0], Ok(lambda));
    sink.put(NAMES[1], Ok(logs.iter().sum()));
    sink.put(NAMES[2], Ok(lambda.abs()));
    let critical = logs.iter().filter(|x| x.abs() <= cfg.eps_critical).count();
    sink.put(NAMES[3], Ok(critical as f64 / logs.len() as f64));
    sink.put(NAMES[4], Ok(logs.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x))));
    sink.put(NAMES[5], Ok(population_std(&logs)));
    (source, skipped)
}
