// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use num_rational::Ratio;
use statrs::distribution::{Binomial, DiscreteCDF};

use nctr_core::linalg::{effective_rank, fit_ar, linear_cka, participation_ratio, spectral_entropy};
use nctr_core::pipeline::{
    classification_rows, cmd_analyze, cmd_classify, cmd_metrics, cmd_report, cmd_synth, AnalysisConfig, Layout,
    MetricTable,
};
use nctr_core::rng::CounterRng;
use nctr_core::stats::{
    bh_fdr, bootstrap_ci, cohens_d, crossval_logistic_auc, spearman, wilcoxon_signed_rank, ClassifierConfig,
};
use nctr_core::toysim::{run_toy_experiment, SynthSpec, ToyConfig};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn toy_reproduction() -> Outcome {
    let start = Instant::now();
    let s = single_threaded(|| run_toy_experiment(&ToyConfig::default())).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let rho_ok = [s.rho_first, s.rho_second].iter().all(|r| (1.05..=1.35).contains(r));
    check(
        (3.0..=4.2).contains(&s.crossing_ratio)
            && (0.79..=1.19).contains(&s.cohens_d)
            && s.p_value < 1e-20
            && rho_ok
            && secs < 60.0,
        format!(
            "ratio {:.3}, d {:.3}, p {:.2e}, rho {:.4}/{:.4}, {secs:.1}s single-threaded",
            s.crossing_ratio, s.cohens_d, s.p_value, s.rho_first, s.rho_second
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6
}

fn kernel_oracles() -> Outcome {
    let mut failures = Vec::new();
    let mut count = 0;
    let mut expect = |name: &str, got: f64, want: f64| {
        count += 1;
        if !close(got, want) {
            failures.push(format!("{name}: {got} vs {want}"));
        }
    };
    let ln2 = 2f64.ln();
    expect("effective_rank flat", effective_rank(&[2.0; 4]).unwrap(), 4.0);
    expect("effective_rank one", effective_rank(&[5.0, 0.0, 0.0]).unwrap(), 1.0);
    expect("effective_rank 2:1:1", effective_rank(&[2.0, 1.0, 1.0]).unwrap(), 2f64.powf(1.5));
    expect("spectral_entropy pair", spectral_entropy(&[1.0, 1.0]).unwrap(), ln2);
    expect("spectral_entropy 3:1", spectral_entropy(&[3.0, 1.0]).unwrap(), 2.0 * ln2 - 0.75 * 3f64.ln());
    expect("participation_ratio flat", participation_ratio(&[1.0, -1.0, 1.0, 1.0]).unwrap(), 4.0);
    expect("participation_ratio 1,2", participation_ratio(&[1.0, 2.0]).unwrap(), 25.0 / 17.0);
    expect("participation_ratio 3,0,4", participation_ratio(&[3.0, 0.0, 4.0]).unwrap(), 625.0 / 337.0);

    let col = |v: &[f64]| DMatrix::from_column_slice(v.len(), 1, v);
    expect("cka 1d", linear_cka(&col(&[1.0, 2.0, 3.0]), &col(&[1.0, 0.0, 2.0])).unwrap(), 0.25);
    let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
    expect("cka subspace", linear_cka(&x, &col(&[1.0, 0.0, -1.0, 0.0])).unwrap(), 0.5f64.sqrt());
    let (c, s) = (0.6, 0.8);
    let rotated = &x * DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) * 3.0;
    expect("cka rotation", linear_cka(&x, &rotated.add_scalar(7.0)).unwrap(), 1.0);

    expect("cohens_d equal n", cohens_d(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), -3.0);
    expect("cohens_d unequal n", cohens_d(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0]).unwrap(), -0.5 / 1.75f64.sqrt());
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    expect("spearman ties", spearman(&xs, &[5.0, 6.0, 7.0, 8.0, 7.0]).unwrap().0, 8.0 / 95f64.sqrt());
    expect("spearman monotone", spearman(&xs, &[1.0, 8.0, 27.0, 64.0, 125.0]).unwrap().0, 1.0);
    expect("spearman reversed", spearman(&xs, &[9.0, 7.0, 5.0, 3.0, 1.0]).unwrap().0, -1.0);

    let processes: [&[f64]; 5] = [&[0.9], &[1.6, -0.8], &[0.5, 0.3, -0.2], &[0.2, 0.3, 0.1, -0.4], &[-0.5, 0.4]];
    for coeffs in processes {
        let p = coeffs.len();
        let mut series: Vec<f64> = (0..p).map(|i| 1.0 + 0.5 * i as f64 - 0.3 * (i * i) as f64).collect();
        while series.len() < 30 {
            let n = series.len();
            series.push((0..p).map(|k| coeffs[k] * series[n - 1 - k]).sum());
        }
        let fit = fit_ar(&series, p).map_err(|e| e.to_string())?;
        for (k, (got, want)) in fit.coefficients.iter().zip(coeffs).enumerate() {
            expect(&format!("fit_ar order {p} c{}", k + 1), *got, *want);
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() { format!("{count} values within 1e-6") } else { failures.join("; ") },
    )
}

/// Two-sided exact p by enumerating all sign assignments in rational arithmetic.
fn wilcoxon_enumerated(diffs: &[f64]) -> Ratio<i64> {
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    // ranks as exact rationals: mean position of each tie block
    let ranks: Vec<Ratio<i64>> = nz
        .iter()
        .map(|d| {
            let below = nz.iter().filter(|e| e.abs() < d.abs()).count() as i64;
            let tied = nz.iter().filter(|e| e.abs() == d.abs()).count() as i64;
            Ratio::new(2 * below + tied + 1, 2)
        })
        .collect();
    let total: Ratio<i64> = ranks.iter().copied().sum();
    let w_plus: Ratio<i64> = ranks.iter().zip(&nz).filter(|(_, &d)| d > 0.0).map(|(r, _)| *r).sum();
    let w = w_plus.min(total - w_plus);
    let mut hits = 0i64;
    for mask in 0u32..(1 << n) {
        let s: Ratio<i64> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s.min(total - s) <= w {
            hits += 1;
        }
    }
    Ratio::new(hits, 1 << n).min(Ratio::from_integer(1))
}

fn brute_bh(p: &[f64], q: f64) -> (Vec<bool>, Vec<f64>) {
    let m = p.len();
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (1..=m).rev().find(|&k| sorted[k - 1] <= k as f64 * q / m as f64);
    let rejected = p.iter().map(|&x| k.is_some_and(|k| x <= sorted[k - 1])).collect();
    let qvals = p
        .iter()
        .map(|&x| {
            (1..=m).filter(|&j| sorted[j - 1] >= x).map(|j| m as f64 * sorted[j - 1] / j as f64).fold(1.0, f64::min)
        })
        .collect();
    (rejected, qvals)
}

fn exact_tests() -> Outcome {
    let mut rng = CounterRng::new(2718, 0);
    let mut mismatched = Vec::new();
    for v in 0..200 {
        let n = 1 + v % 12;
        let diffs: Vec<f64> = loop {
            // half-integer grid in [-3, 3] produces ties and zeros
            let d: Vec<f64> = (0..n).map(|_| (rng.below(13) as f64 - 6.0) / 2.0).collect();
            if d.iter().any(|&x| x != 0.0) {
                break d;
            }
        };
        let got = wilcoxon_signed_rank(&diffs).map_err(|e| e.to_string())?;
        let want = wilcoxon_enumerated(&diffs);
        let want_f = *want.numer() as f64 / *want.denom() as f64;
        if !got.exact || got.p != want_f {
            mismatched.push(format!("{diffs:?}: {} vs {want}", got.p));
        }
    }
    let mut bh_bad = 0;
    for _ in 0..1000 {
        let m = 1 + rng.below(60);
        let p: Vec<f64> = (0..m)
            .map(|_| match rng.below(4) {
                0 => rng.uniform() * 0.01,
                1 => (rng.below(20) as f64) / 20.0,
                _ => rng.uniform(),
            })
            .collect();
        let q = [0.01, 0.05, 0.1, 0.25][rng.below(4)];
        let got = bh_fdr(&p, q);
        let (rej, qv) = brute_bh(&p, q);
        if got.rejected != rej || got.qvalues.iter().zip(&qv).any(|(a, b)| (a - b).abs() > 1e-12) {
            bh_bad += 1;
        }
    }
    check(
        mismatched.is_empty() && bh_bad == 0,
        format!(
            "wilcoxon {} of 200 exact p mismatch (n <= 12){}; bh_fdr {bh_bad} of 1000 mismatch",
            mismatched.len(),
            mismatched.first().map(|m| format!(", e.g. {m}")).unwrap_or_default()
        ),
    )
}

fn pipeline_config(corpus: &Path, out: &Path) -> AnalysisConfig {
    AnalysisConfig {
        manifest: Some(corpus.join("manifest.jsonl")),
        out: out.to_path_buf(),
        bootstrap_iterations: 1000,
        ..AnalysisConfig::default()
    }
}

/// Central 99% interval of Binomial(m, p).
fn binomial_99(m: usize, p: f64) -> (u64, u64) {
    let b = Binomial::new(p, m as u64).unwrap();
    let lo = (0..=m as u64).find(|&k| b.cdf(k) > 0.005).unwrap();
    let hi = (0..=m as u64).find(|&k| b.cdf(k) >= 0.995).unwrap();
    (lo, hi)
}

fn null_calibration(dir: &Path) -> Outcome {
    let corpus = dir.join("null");
    let n = cmd_synth(&SynthSpec::null(), 1001, &corpus).map_err(|e| e.to_string())?;
    let cfg = pipeline_config(&corpus, &dir.join("null-out"));
    cmd_metrics(&cfg).map_err(|e| e.to_string())?;
    let a = cmd_analyze(&cfg).map_err(|e| e.to_string())?;
    let cells: Vec<_> = a.sweeps.iter().filter(|s| s.effect.comparison == "C4_vs_C2").collect();
    let m = cells.len();
    let raw = cells.iter().filter(|s| s.effect.p_raw < cfg.fdr_q).count() as u64;
    let bh = cells.iter().filter(|s| s.effect.significant).count() as u64;
    let (lo, hi) = binomial_99(m, cfg.fdr_q);

    let table = MetricTable::load(&Layout::new(&cfg.out).metrics_table()).map_err(|e| e.to_string())?;
    let model = table.models().remove(0);
    let mut rows = classification_rows(&table, &model, false);
    CounterRng::new(77, 0).shuffle(&mut rows.y);
    let r = crossval_logistic_auc(&rows.x, &rows.y, &ClassifierConfig::default()).map_err(|e| e.to_string())?;
    check(
        (lo..=hi).contains(&raw) && bh <= hi && (0.38..=0.62).contains(&r.mean_auc),
        format!(
            "{n} records; C4 vs C2: {raw} of {m} cells at p < 0.05, {bh} after FDR, 99% band [{lo}, {hi}]; shuffled-label AUC {:.3}",
            r.mean_auc
        ),
    )
}

fn signal_recovery(dir: &Path) -> Outcome {
    let corpus = dir.join("signal");
    cmd_synth(&SynthSpec::signal(), 2002, &corpus).map_err(|e| e.to_string())?;
    let cfg = pipeline_config(&corpus, &dir.join("signal-out"));
    cmd_metrics(&cfg).map_err(|e| e.to_string())?;
    let a = cmd_analyze(&cfg).map_err(|e| e.to_string())?;
    let c = cmd_classify(&cfg).map_err(|e| e.to_string())?;
    let count = |cmp: &str| a.sweep_count(cmp).map_or(0, |c| c.significant);
    let (c42, c43) = (count("C4_vs_C2"), count("C4_vs_C3"));
    let layers = a.layer_d.iter().filter(|l| l.comparison == "C4_vs_C2").count();
    let min_d = a.layer_d.iter().map(|l| l.d).fold(f64::INFINITY, f64::min);
    let auc = c[0].report.mean_auc;
    check(
        c42 > c43 && layers > 0 && min_d > 0.0 && auc >= 0.90,
        format!("significant C4 vs C2 {c42} > C4 vs C3 {c43}; min per-layer d {min_d:.3} over {layers} layers; AUC {auc:.3}"),
    )
}

fn bootstrap_coverage() -> Outcome {
    let delta = 0.5;
    let covered = (0..100u64)
        .filter(|&trial| {
            let mut rng = CounterRng::new(31337, trial);
            let a: Vec<f64> = (0..200).map(|_| delta + rng.normal()).collect();
            let b: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
            let ci = bootstrap_ci(&a, &b, 2000, 1000 + trial).unwrap();
            ci.low <= delta && delta <= ci.high
        })
        .count();
    check(covered >= 93, format!("{covered}/100 intervals cover d = {delta} at n = 200 per group"))
}

fn determinism(dir: &Path) -> Outcome {
    let corpus = dir.join("signal");
    let outputs: Vec<Vec<Vec<u8>>> = [1usize, 4]
        .iter()
        .map(|&threads| {
            let cfg = pipeline_config(&corpus, &dir.join(format!("det-{threads}")));
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| -> Result<_, String> {
                cmd_metrics(&cfg).map_err(|e| e.to_string())?;
                cmd_analyze(&cfg).map_err(|e| e.to_string())?;
                cmd_classify(&cfg).map_err(|e| e.to_string())?;
                cmd_report(&cfg).map_err(|e| e.to_string())?;
                let l = Layout::new(&cfg.out);
                Ok([l.report_md(), l.plot_data()].iter().map(|p| std::fs::read(p).unwrap()).collect())
            })
        })
        .collect::<Result<_, _>>()?;
    check(
        outputs[0] == outputs[1],
        format!("report.md and plot_data.json identical at 1 and 4 threads ({} bytes)", outputs[0][0].len()),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("toy reproduction", Box::new(toy_reproduction)),
        ("kernel oracles", Box::new(kernel_oracles)),
        ("exact tests", Box::new(exact_tests)),
        ("null calibration", Box::new(|| null_calibration(dir.path()))),
        ("signal recovery", Box::new(|| signal_recovery(dir.path()))),
        ("bootstrap coverage", Box::new(bootstrap_coverage)),
        ("determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
