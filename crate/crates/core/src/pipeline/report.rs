// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::analyze::AnalysisReport;
use super::classify::ModelClassification;
use super::extract::MetricsSummary;
use super::table::{fmt_f64, read_json, write_json, write_text, MetricTable, Tsv};
use super::{require, AnalysisConfig, Layout, PipelineError};
use crate::corpus::Cluster;
use crate::stats::percentile;
use crate::toysim::{
    generate_synthetic_corpus, run_toy_experiment, write_synthetic_corpus, SynthSpec, ToyExperimentSummary,
};

/// Runs the toy residual-network experiment and writes its summary and per-run counts.
pub fn cmd_toy(cfg: &AnalysisConfig) -> Result<ToyExperimentSummary, PipelineError> {
    let s = run_toy_experiment(&cfg.toy)?;
    let layout = Layout::new(&cfg.out);
    let mut t = Tsv::new(["field", "value"]);
    let fields: [(&str, String); 14] = [
        ("layers", s.config.layers.to_string()),
        ("width", s.config.width.to_string()),
        ("runs", s.config.runs.to_string()),
        ("weight_scale", fmt_f64(s.config.weight_scale)),
        ("alpha", fmt_f64(s.config.alpha)),
        ("seed", s.config.seed.to_string()),
        ("mean_crossings_closing", fmt_f64(s.mean_crossings_first)),
        ("mean_crossings_nonclosing", fmt_f64(s.mean_crossings_second)),
        ("crossing_ratio", fmt_f64(s.crossing_ratio)),
        ("cohens_d", fmt_f64(s.cohens_d)),
        ("p_value", fmt_f64(s.p_value)),
        ("rho_closing", fmt_f64(s.rho_first)),
        ("rho_nonclosing", fmt_f64(s.rho_second)),
        ("paired_nonclosing_greater", fmt_f64(s.paired_second_greater)),
    ];
    for (k, v) in fields {
        t.push(vec![k.to_string(), v]);
    }
    t.write(&layout.toy_dir().join("summary.tsv"))?;
    let mut runs = Tsv::new(["run", "crossings_closing", "crossings_nonclosing"]);
    for (i, (a, b)) in s.crossings_first.iter().zip(&s.crossings_second).enumerate() {
        runs.push(vec![i.to_string(), a.to_string(), b.to_string()]);
    }
    runs.write(&layout.toy_dir().join("runs.tsv"))?;
    write_json(&layout.toy_json(), &s)?;
    Ok(s)
}

/// Reads a synthetic-corpus spec from TOML; unspecified fields keep their defaults.
pub fn load_synth_spec(path: &Path) -> Result<SynthSpec, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    toml::from_str(&text).map_err(|e| PipelineError::Config { path: Some(path.to_path_buf()), message: e.to_string() })
}

/// Generates a synthetic corpus (manifest plus dumps) under `dir`; returns the record count.
pub fn cmd_synth(spec: &SynthSpec, seed: u64, dir: &Path) -> Result<usize, PipelineError> {
    let corpus = generate_synthetic_corpus(spec, seed)?;
    write_synthetic_corpus(&corpus, dir)?;
    Ok(corpus.records.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerSeries {
    model_id: String,
    comparison: String,
    layers: Vec<usize>,
    d: Vec<f64>,
}

/// Five-number summary `[min, q1, median, q3, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BoxSummary {
    model_id: String,
    metric: String,
    cluster: Cluster,
    n: usize,
    quantiles: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlotData {
    layer_d: Vec<LayerSeries>,
    boxplots: Vec<BoxSummary>,
    toy_crossings: Option<BTreeMap<String, [f64; 5]>>,
}

fn five(mut xs: Vec<f64>) -> [f64; 5] {
    xs.sort_by(f64::total_cmp);
    [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| percentile(&xs, q))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub sections: Vec<String>,
    pub includes_toy: bool,
}

fn p_str(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.1e}")
    } else {
        format!("{p:.4}")
    }
}

fn md_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}|", header.iter().map(|_| "---").collect::<Vec<_>>().join("|"));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

struct Inputs {
    summary: MetricsSummary,
    table: MetricTable,
    analysis: AnalysisReport,
    classify: Vec<ModelClassification>,
    toy: Option<ToyExperimentSummary>,
}

fn corpus_section(out: &mut String, i: &Inputs) {
    let s = &i.summary;
    let _ = writeln!(out, "## Corpus\n");
    let _ = writeln!(
        out,
        "{} records in the manifest, {} with metrics, {} failed. Models: {}.\n",
        s.records,
        s.computed,
        s.failures.len(),
        i.analysis.models.join(", ")
    );
    if !s.null_causes.is_empty() {
        let rows: Vec<Vec<String>> = s.null_causes.iter().map(|(c, n)| vec![format!("`{c}`"), n.to_string()]).collect();
        md_table(out, &["null cause", "values"], &rows);
    }
    let temps = if i.analysis.t0_only { "use T = 0 records only" } else { "pool all temperatures" };
    let _ =
        writeln!(out, "Group and cluster analyses {temps}; contradiction rates and the rank correlation use T = 0.\n");
}

fn hypothesis_section(out: &mut String, a: &AnalysisReport) {
    let _ = writeln!(out, "## Pre-specified hypotheses\n");
    let rows: Vec<Vec<String>> = a
        .hypotheses
        .iter()
        .map(|h| {
            let e = &h.effect;
            let mark = if h.assumption.is_some() { " (assumed)" } else { "" };
            vec![
                format!("{}{mark}", h.hypothesis),
                h.model_id.clone(),
                format!("`{}`", e.metric),
                e.comparison.clone(),
                format!("{} / {}", e.n_a, e.n_b),
                format!("{:.3}", e.d),
                format!("[{:.3}, {:.3}]", e.ci_low, e.ci_high),
                p_str(e.p_raw),
                format!("{} (m = {})", p_str(e.p_bonf), h.m),
                if e.significant { "yes".into() } else { "no".into() },
            ]
        })
        .collect();
    md_table(
        out,
        &["test", "model", "metric", "groups", "n", "d", "95% CI", "p", "p (Bonferroni)", "significant"],
        &rows,
    );
    let notes: BTreeMap<&str, &str> =
        a.hypotheses.iter().filter_map(|h| Some((h.hypothesis.as_str(), h.assumption.as_deref()?))).collect();
    for (name, note) in notes {
        let _ = writeln!(out, "{name} assumption: {note}.\n");
    }
}

fn cluster_section(out: &mut String, a: &AnalysisReport) {
    let _ = writeln!(out, "## Cluster comparisons\n");
    let rows: Vec<Vec<String>> = a
        .sweep_counts
        .iter()
        .map(|c| {
            vec![
                c.comparison.replace("_vs_", " vs "),
                c.cells.to_string(),
                c.significant.to_string(),
                c.large.to_string(),
            ]
        })
        .collect();
    md_table(
        out,
        &[
            "comparison",
            "cells",
            &format!("significant (q < {})", a.fdr_q),
            &format!("large (\\|d\\| > {})", a.large_effect),
        ],
        &rows,
    );
    for c in &a.sweep_counts {
        let mut top: Vec<_> =
            a.sweeps.iter().filter(|s| s.effect.comparison == c.comparison && s.effect.significant).collect();
        top.sort_by(|x, y| y.effect.d.abs().total_cmp(&x.effect.d.abs()).then(x.effect.metric.cmp(&y.effect.metric)));
        if top.is_empty() {
            continue;
        }
        let _ = writeln!(out, "Strongest {} effects:\n", c.comparison.replace("_vs_", " vs "));
        let rows: Vec<Vec<String>> = top
            .iter()
            .take(5)
            .map(|s| {
                vec![
                    format!("`{}`", s.effect.metric),
                    s.model_id.clone(),
                    format!("{:.3}", s.effect.d),
                    p_str(s.effect.q_fdr),
                ]
            })
            .collect();
        md_table(out, &["metric", "model", "d", "q"], &rows);
    }
}

fn ablation_section(out: &mut String, a: &AnalysisReport) {
    let _ = writeln!(out, "## Minimal-pair ablation\n");
    let _ = writeln!(
        out,
        "{} of {} metric-model cells significant (Wilcoxon signed-rank, q < {}), {} with |d| > {}.\n",
        a.ablation_significant,
        a.ablation.len(),
        a.fdr_q,
        a.ablation_large,
        a.large_effect
    );
    let mut sig: Vec<_> = a.ablation.iter().filter(|c| c.significant).collect();
    sig.sort_by(|x, y| x.q.total_cmp(&y.q).then(x.metric.cmp(&y.metric)));
    let rows: Vec<Vec<String>> = sig
        .iter()
        .take(10)
        .map(|c| {
            vec![format!("`{}`", c.metric), c.model_id.clone(), c.n.to_string(), format!("{:.3}", c.d), p_str(c.q)]
        })
        .collect();
    md_table(out, &["metric", "model", "n", "d", "q"], &rows);
}

fn layer_series(a: &AnalysisReport) -> Vec<LayerSeries> {
    let mut series: Vec<LayerSeries> = Vec::new();
    for c in &a.layer_d {
        match series.iter_mut().find(|s| s.model_id == c.model_id && s.comparison == c.comparison) {
            Some(s) => {
                s.layers.push(c.layer);
                s.d.push(c.d);
            }
            None => series.push(LayerSeries {
                model_id: c.model_id.clone(),
                comparison: c.comparison.clone(),
                layers: vec![c.layer],
                d: vec![c.d],
            }),
        }
    }
    series
}

fn layer_section(out: &mut String, series: &[LayerSeries]) {
    let _ = writeln!(out, "## Per-layer attention effective rank\n");
    for s in series {
        let _ = writeln!(out, "{} {}:\n", s.model_id, s.comparison.replace("_vs_", " vs "));
        let header: Vec<String> =
            std::iter::once("layer".to_string()).chain(s.layers.iter().map(|l| l.to_string())).collect();
        let row: Vec<String> = std::iter::once("d".to_string()).chain(s.d.iter().map(|d| format!("{d:.2}"))).collect();
        md_table(out, &header.iter().map(String::as_str).collect::<Vec<_>>(), &[row]);
    }
}

fn ancova_section(out: &mut String, a: &AnalysisReport) {
    let _ = writeln!(out, "## Length control\n");
    let rows: Vec<Vec<String>> = a
        .ancova_summary
        .iter()
        .map(|s| {
            vec![
                s.comparison.replace("_vs_", " vs "),
                s.cells.to_string(),
                s.retained.to_string(),
                format!("{} of {}", s.retained_of_significant, s.sweep_significant),
            ]
        })
        .collect();
    md_table(
        out,
        &["comparison", "cells", &format!("group p < {} after adjustment", a.alpha), "retained of sweep-significant"],
        &rows,
    );
}

fn correlation_section(out: &mut String, a: &AnalysisReport) {
    let _ = writeln!(out, "## Attention rank and contradictory output\n");
    let rows: Vec<Vec<String>> = a
        .correlations
        .iter()
        .map(|c| vec![c.model_id.clone(), c.n.to_string(), format!("{:.3}", c.rho), p_str(c.p)])
        .collect();
    md_table(out, &["model", "n", "Spearman rho", "p"], &rows);
}

fn contradiction_section(out: &mut String, a: &AnalysisReport) {
    let _ = writeln!(out, "## Contradictory-output rates (T = 0)\n");
    let rate = |model: &str, cl: Cluster| a.contradiction.iter().find(|r| r.model_id == model && r.cluster == cl);
    let cell = |r: Option<&super::ContradictionRow>| {
        r.map_or_else(|| "-".to_string(), |r| format!("{:.1}% ({}/{})", 100.0 * r.rate, r.contradictions, r.n))
    };
    let rows: Vec<Vec<String>> = a
        .models
        .iter()
        .map(|m| {
            let mut row = vec![m.clone()];
            row.extend([Cluster::C1, Cluster::C2, Cluster::C3, Cluster::C4].map(|c| cell(rate(m, c))));
            row.push(match (rate(m, Cluster::C4), rate(m, Cluster::C1)) {
                (Some(x), Some(y)) => format!("{:+.1} pp", 100.0 * (x.rate - y.rate)),
                _ => "-".into(),
            });
            row
        })
        .collect();
    md_table(out, &["model", "C1", "C2", "C3", "C4", "C4 - C1"], &rows);
}

fn classify_section(out: &mut String, c: &[ModelClassification]) {
    let _ = writeln!(out, "## Classification\n");
    let rows: Vec<Vec<String>> = c
        .iter()
        .map(|m| {
            vec![
                m.model_id.clone(),
                m.n.to_string(),
                m.positives.to_string(),
                format!("{:.3} ± {:.3}", m.report.mean_auc, m.report.std_auc),
                m.report.fold_aucs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(", "),
            ]
        })
        .collect();
    md_table(out, &["model", "n", "C4", "AUC", "fold AUCs"], &rows);
}

fn toy_section(out: &mut String, s: &ToyExperimentSummary) {
    let _ = writeln!(out, "## Toy residual network\n");
    let c = &s.config;
    let _ = writeln!(out, "L = {}, d = {}, {} runs per condition, seed {}.\n", c.layers, c.width, c.runs, c.seed);
    let rows = vec![
        vec![
            "mean zero crossings".into(),
            format!("{:.3}", s.mean_crossings_first),
            format!("{:.3}", s.mean_crossings_second),
        ],
        vec!["growth rho".into(), format!("{:.4}", s.rho_first), format!("{:.4}", s.rho_second)],
    ];
    md_table(out, &["", "closing", "non-closing"], &rows);
    let _ = writeln!(
        out,
        "Crossing ratio {:.3}, Cohen's d {:.3}, Welch p {}; non-closing crosses more often in {:.1}% of paired runs.\n",
        s.crossing_ratio,
        s.cohens_d,
        p_str(s.p_value),
        100.0 * s.paired_second_greater
    );
}

fn plot_data(i: &Inputs, series: Vec<LayerSeries>) -> PlotData {
    let mut metrics: Vec<String> = vec!["attn_eff_rank_mean".into()];
    for h in &i.analysis.hypotheses {
        if !metrics.contains(&h.effect.metric) {
            metrics.push(h.effect.metric.clone());
        }
    }
    let mut boxplots = Vec::new();
    for model in &i.analysis.models {
        for metric in &metrics {
            let Ok(col) = i.table.column(metric) else { continue };
            for cluster in [Cluster::C1, Cluster::C2, Cluster::C3, Cluster::C4] {
                let xs: Vec<f64> = i
                    .table
                    .rows
                    .iter()
                    .filter(|r| r.meta.model_id == *model && r.meta.cluster == cluster)
                    .filter(|r| !i.analysis.t0_only || r.meta.is_t0())
                    .filter_map(|r| r.values[col])
                    .collect();
                if !xs.is_empty() {
                    let n = xs.len();
                    boxplots.push(BoxSummary {
                        model_id: model.clone(),
                        metric: metric.clone(),
                        cluster,
                        n,
                        quantiles: five(xs),
                    });
                }
            }
        }
    }
    let toy_crossings = i.toy.as_ref().map(|s| {
        let f = |v: &[usize]| five(v.iter().map(|&x| x as f64).collect());
        BTreeMap::from([
            ("closing".to_string(), f(&s.crossings_first)),
            ("nonclosing".to_string(), f(&s.crossings_second)),
        ])
    });
    PlotData { layer_d: series, boxplots, toy_crossings }
}

/// Consolidates the outputs of every stage into `report/report.md` and `report/plot_data.json`.
/// The toy section is included when the toy stage has been run.
pub fn cmd_report(cfg: &AnalysisConfig) -> Result<ReportSummary, PipelineError> {
    let layout = Layout::new(&cfg.out);
    let inputs = Inputs {
        summary: read_json(&require("metrics", layout.metrics_summary())?)?,
        table: MetricTable::load(&require("metrics", layout.metrics_table())?)?,
        analysis: AnalysisReport::load(&layout)?,
        classify: ModelClassification::load_all(&layout)?,
        toy: if layout.toy_json().is_file() { Some(read_json(&layout.toy_json())?) } else { None },
    };
    let a = &inputs.analysis;
    let series = layer_series(a);
    let mut out = String::from("# Analysis report\n\n");
    corpus_section(&mut out, &inputs);
    hypothesis_section(&mut out, a);
    cluster_section(&mut out, a);
    ablation_section(&mut out, a);
    layer_section(&mut out, &series);
    ancova_section(&mut out, a);
    correlation_section(&mut out, a);
    contradiction_section(&mut out, a);
    classify_section(&mut out, &inputs.classify);
    if let Some(s) = &inputs.toy {
        toy_section(&mut out, s);
    }
    if !a.skipped.is_empty() {
        let _ = writeln!(out, "{} cells were skipped; see `analysis/skipped.tsv`.", a.skipped.len());
    }
    let sections = out.lines().filter_map(|l| l.strip_prefix("## ")).map(String::from).collect();
    write_text(&layout.report_md(), &out)?;
    write_json(&layout.plot_data(), &plot_data(&inputs, series))?;
    Ok(ReportSummary { sections, includes_toy: inputs.toy.is_some() })
}
