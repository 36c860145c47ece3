// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hypothesis tests, cluster sweeps, minimal-pair ablation, per-layer profiles,
//! length-controlled ANCOVA, the rank-correlation pathway and contradiction rates.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{fmt_f64, read_json, write_json, LayerProfiles, MetricRow, MetricTable, RowMeta, Tsv};
use super::{cell_seed, require, AnalysisConfig, ClusterComparison, Covariate, Layout, PipelineError};
use crate::corpus::{Cluster, Group};
use crate::stats::{
    ancova_group_p, apply_corrections, bh_fdr, cohens_d, effect_cell, spearman, wilcoxon_signed_rank, Criterion,
    EffectResult,
};

const STAGE_HYPOTHESES: u64 = 1;
const STAGE_SWEEPS: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub hypothesis: String,
    pub model_id: String,
    pub group: Group,
    pub reference: Group,
    pub assumption: Option<String>,
    /// Bonferroni pool this test was counted in, and the pool's test count.
    pub pool: String,
    pub m: usize,
    pub effect: EffectResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub model_id: String,
    pub large: bool,
    pub effect: EffectResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCount {
    pub comparison: String,
    pub cells: usize,
    pub significant: usize,
    pub large: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub model_id: String,
    pub metric: String,
    pub n: usize,
    /// Cohen's d of self-referential versus control values.
    pub d: f64,
    pub w: f64,
    pub exact: bool,
    pub p: f64,
    pub q: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDCell {
    pub model_id: String,
    pub comparison: String,
    pub layer: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncovaCell {
    pub comparison: String,
    pub model_id: String,
    pub metric: String,
    pub n: usize,
    pub group_effect: f64,
    pub p: f64,
    pub retained: bool,
    pub sweep_significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncovaSummary {
    pub comparison: String,
    pub cells: usize,
    /// Cells whose group effect has `p < alpha` after adjusting for the covariate.
    pub retained: usize,
    pub sweep_significant: usize,
    pub retained_of_significant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub model_id: String,
    pub n: usize,
    pub rho: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContradictionRow {
    pub model_id: String,
    pub cluster: Cluster,
    pub n: usize,
    pub contradictions: usize,
    pub rate: f64,
}

/// A cell that could not be computed, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub analysis: String,
    pub model_id: String,
    pub comparison: String,
    pub metric: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub records: usize,
    pub models: Vec<String>,
    pub t0_only: bool,
    pub alpha: f64,
    pub fdr_q: f64,
    pub large_effect: f64,
    pub bootstrap_iterations: usize,
    pub covariate: Covariate,
    pub hypotheses: Vec<HypothesisResult>,
    pub sweeps: Vec<SweepCell>,
    pub sweep_counts: Vec<SweepCount>,
    pub ablation: Vec<AblationCell>,
    pub ablation_significant: usize,
    pub ablation_large: usize,
    pub layer_d: Vec<LayerDCell>,
    pub ancova: Vec<AncovaCell>,
    pub ancova_summary: Vec<AncovaSummary>,
    pub correlations: Vec<CorrelationRow>,
    pub contradiction: Vec<ContradictionRow>,
    pub skipped: Vec<SkippedCell>,
}

impl AnalysisReport {
    pub fn sweep_count(&self, comparison: &str) -> Option<&SweepCount> {
        self.sweep_counts.iter().find(|c| c.comparison == comparison)
    }

    pub(crate) fn load(layout: &Layout) -> Result<Self, PipelineError> {
        read_json(&require("analyze", layout.analysis_json())?)
    }
}

struct Ctx<'a> {
    cfg: &'a AnalysisConfig,
    table: &'a MetricTable,
    rows: Vec<&'a MetricRow>,
    models: Vec<String>,
    skipped: Vec<SkippedCell>,
}

impl<'a> Ctx<'a> {
    fn values(&self, col: usize, pred: impl Fn(&RowMeta) -> bool) -> Vec<f64> {
        self.rows.iter().filter(|r| pred(&r.meta)).filter_map(|r| r.values[col]).collect()
    }

    fn skip(&mut self, analysis: &str, model_id: &str, comparison: &str, metric: &str, reason: impl Into<String>) {
        self.skipped.push(SkippedCell {
            analysis: analysis.into(),
            model_id: model_id.into(),
            comparison: comparison.into(),
            metric: metric.into(),
            reason: reason.into(),
        });
    }
}

fn insufficient(a: usize, b: usize) -> Option<String> {
    (a < 2 || b < 2).then(|| format!("insufficient group (n = {a}, {b})"))
}

fn finite_effect(e: &EffectResult) -> bool {
    [e.d, e.ci_low, e.ci_high, e.p_raw].iter().all(|x| x.is_finite())
}

fn hypotheses(ctx: &mut Ctx) -> Result<Vec<HypothesisResult>, PipelineError> {
    let table = ctx.table;
    let cfg = ctx.cfg;
    let mut out = Vec::new();
    let mut index = 0;
    for model in ctx.models.clone() {
        for h in &cfg.hypotheses {
            let col = table.column(&h.metric)?;
            let a = ctx.values(col, |m| m.model_id == model && m.group == h.group);
            let b = ctx.values(col, |m| m.model_id == model && m.group == h.reference);
            let comparison = format!("{} vs {}", h.group.label(), h.reference.label());
            index += 1;
            if let Some(why) = insufficient(a.len(), b.len()) {
                ctx.skip("hypotheses", &model, &h.name, &h.metric, why);
                continue;
            }
            let seed = cell_seed(cfg.seed, STAGE_HYPOTHESES, index);
            match effect_cell(&h.metric, &comparison, &a, &b, cfg.bootstrap_iterations, seed) {
                Ok(effect) if finite_effect(&effect) => out.push(HypothesisResult {
                    hypothesis: h.name.clone(),
                    model_id: model.clone(),
                    group: h.group,
                    reference: h.reference,
                    assumption: h.assumption.clone(),
                    pool: String::new(),
                    m: 0,
                    effect,
                }),
                Ok(_) => ctx.skip("hypotheses", &model, &h.name, &h.metric, "non-finite statistic"),
                Err(e) => ctx.skip("hypotheses", &model, &h.name, &h.metric, e.to_string()),
            }
        }
    }
    // Bonferroni pools: an explicit count, else the original-model pool when all of its
    // models are present (others tested independently), else every test together.
    let pool_complete = !cfg.bonferroni_pool.is_empty() && cfg.bonferroni_pool.iter().all(|m| ctx.models.contains(m));
    let pool_of = |r: &HypothesisResult| -> String {
        if cfg.bonferroni_m.is_some() {
            "configured".into()
        } else if pool_complete {
            if cfg.bonferroni_pool.contains(&r.model_id) {
                "original".into()
            } else {
                r.model_id.clone()
            }
        } else {
            "all".into()
        }
    };
    let mut pools: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in out.iter().enumerate() {
        pools.entry(pool_of(r)).or_default().push(i);
    }
    for (pool, idx) in pools {
        let m = match (&*pool, cfg.bonferroni_m) {
            (_, Some(m)) => m,
            ("original", None) => cfg.bonferroni_pool_m,
            _ => idx.len(),
        };
        let mut effects: Vec<EffectResult> = idx.iter().map(|&i| out[i].effect.clone()).collect();
        apply_corrections(&mut effects, m, cfg.alpha, Criterion::Bonferroni);
        for (&i, e) in idx.iter().zip(effects) {
            out[i].effect = e;
            out[i].pool = pool.clone();
            out[i].m = m;
        }
    }
    Ok(out)
}

struct CellSpec {
    comparison: ClusterComparison,
    model: String,
    col: usize,
}

fn sweeps(ctx: &mut Ctx) -> (Vec<SweepCell>, Vec<SweepCount>) {
    let table = ctx.table;
    let cfg = ctx.cfg;
    let mut specs = Vec::new();
    for &comparison in &cfg.comparisons {
        for model in &ctx.models {
            for col in 0..table.metrics.len() {
                specs.push(CellSpec { comparison, model: model.clone(), col });
            }
        }
    }
    let results: Vec<Result<EffectResult, String>> = specs
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let metric = &table.metrics[s.col];
            let a = ctx.values(s.col, |m| m.model_id == s.model && m.cluster == s.comparison.target);
            let b = ctx.values(s.col, |m| m.model_id == s.model && m.cluster == s.comparison.reference);
            if let Some(why) = insufficient(a.len(), b.len()) {
                return Err(why);
            }
            let seed = cell_seed(cfg.seed, STAGE_SWEEPS, i);
            let e = effect_cell(metric, &s.comparison.label(), &a, &b, cfg.bootstrap_iterations, seed)
                .map_err(|e| e.to_string())?;
            if finite_effect(&e) {
                Ok(e)
            } else {
                Err("non-finite statistic".into())
            }
        })
        .collect();
    let mut by_comparison: Vec<(String, Vec<SweepCell>)> =
        cfg.comparisons.iter().map(|c| (c.label(), Vec::new())).collect();
    for (s, r) in specs.iter().zip(results) {
        let label = s.comparison.label();
        match r {
            Ok(effect) => {
                let slot = by_comparison.iter_mut().find(|(l, _)| *l == label).expect("known comparison");
                slot.1.push(SweepCell { model_id: s.model.clone(), large: false, effect });
            }
            Err(why) => {
                let metric = table.metrics[s.col].clone();
                ctx.skip("sweeps", &s.model, &label, &metric, why)
            }
        }
    }
    let mut cells = Vec::new();
    let mut counts = Vec::new();
    for (label, mut group) in by_comparison {
        let mut effects: Vec<EffectResult> = group.iter().map(|c| c.effect.clone()).collect();
        let m = effects.len();
        apply_corrections(&mut effects, m, cfg.fdr_q, Criterion::Fdr);
        for (c, e) in group.iter_mut().zip(effects) {
            c.large = e.significant && e.d.abs() > cfg.large_effect;
            c.effect = e;
        }
        counts.push(SweepCount {
            comparison: label,
            cells: group.len(),
            significant: group.iter().filter(|c| c.effect.significant).count(),
            large: group.iter().filter(|c| c.large).count(),
        });
        cells.extend(group);
    }
    (cells, counts)
}

fn ablation(ctx: &mut Ctx) -> Vec<AblationCell> {
    let table = ctx.table;
    let cfg = ctx.cfg;
    // (model, temperature, pair) -> (self-referential row, control row)
    type Key = (String, u64, String);
    let mut pairs: BTreeMap<Key, (Option<&MetricRow>, Option<&MetricRow>)> = BTreeMap::new();
    for &r in &ctx.rows {
        if let Some(pid) = &r.meta.pair_id {
            let slot = pairs.entry((r.meta.model_id.clone(), r.meta.temperature.to_bits(), pid.clone())).or_default();
            match r.meta.group {
                Group::AblSr => slot.0 = Some(r),
                Group::AblCtrl => slot.1 = Some(r),
                _ => {}
            }
        }
    }
    let mut cells = Vec::new();
    for model in ctx.models.clone() {
        let linked: Vec<(&MetricRow, &MetricRow)> =
            pairs.iter().filter(|(k, _)| k.0 == model).filter_map(|(_, (sr, ctrl))| Some(((*sr)?, (*ctrl)?))).collect();
        if linked.is_empty() {
            continue;
        }
        for (col, metric) in table.metrics.iter().enumerate() {
            let (sr, ctrl): (Vec<f64>, Vec<f64>) =
                linked.iter().filter_map(|(s, c)| Some((s.values[col]?, c.values[col]?))).unzip();
            if sr.len() < 2 {
                ctx.skip("ablation", &model, "abl-sr vs abl-ctrl", metric, format!("{} complete pairs", sr.len()));
                continue;
            }
            let diffs: Vec<f64> = sr.iter().zip(&ctrl).map(|(a, b)| a - b).collect();
            match (wilcoxon_signed_rank(&diffs), cohens_d(&sr, &ctrl)) {
                (Ok(w), Ok(d)) if w.p.is_finite() && d.is_finite() => cells.push(AblationCell {
                    model_id: model.clone(),
                    metric: metric.clone(),
                    n: sr.len(),
                    d,
                    w: w.w,
                    exact: w.exact,
                    p: w.p,
                    q: w.p,
                    significant: false,
                }),
                (Err(e), _) | (_, Err(e)) => ctx.skip("ablation", &model, "abl-sr vs abl-ctrl", metric, e.to_string()),
                _ => ctx.skip("ablation", &model, "abl-sr vs abl-ctrl", metric, "non-finite statistic"),
            }
        }
    }
    let bh = bh_fdr(&cells.iter().map(|c| c.p).collect::<Vec<_>>(), cfg.fdr_q);
    for (c, (q, rejected)) in cells.iter_mut().zip(bh.qvalues.into_iter().zip(bh.rejected)) {
        c.q = q;
        c.significant = rejected;
    }
    cells
}

fn layer_profiles(ctx: &mut Ctx, profiles: &LayerProfiles) -> Vec<LayerDCell> {
    let cfg = ctx.cfg;
    let mut out = Vec::new();
    for model in ctx.models.clone() {
        let rows: Vec<(&RowMeta, &Vec<f64>)> = ctx
            .rows
            .iter()
            .filter(|r| r.meta.model_id == model)
            .filter_map(|r| Some((&r.meta, profiles.by_record.get(&r.meta.prompt_id)?)))
            .collect();
        let Some(layers) = rows.first().map(|(_, p)| p.len()) else { continue };
        for c in &cfg.comparisons {
            for layer in cfg.profile_layers(layers) {
                let pick = |cl: Cluster| -> Vec<f64> {
                    rows.iter().filter(|(m, p)| m.cluster == cl && p.len() == layers).map(|(_, p)| p[layer]).collect()
                };
                let (a, b) = (pick(c.target), pick(c.reference));
                let metric = format!("attn_eff_rank_layer_{layer}");
                if let Some(why) = insufficient(a.len(), b.len()) {
                    ctx.skip("layer_profiles", &model, &c.label(), &metric, why);
                    continue;
                }
                match cohens_d(&a, &b) {
                    Ok(d) if d.is_finite() => out.push(LayerDCell {
                        model_id: model.clone(),
                        comparison: c.label(),
                        layer,
                        n_a: a.len(),
                        n_b: b.len(),
                        d,
                    }),
                    Ok(_) => ctx.skip("layer_profiles", &model, &c.label(), &metric, "non-finite statistic"),
                    Err(e) => ctx.skip("layer_profiles", &model, &c.label(), &metric, e.to_string()),
                }
            }
        }
    }
    out
}

fn covariate(cfg: &AnalysisConfig, m: &RowMeta) -> f64 {
    match cfg.covariate {
        Covariate::SequenceLength => (m.prompt_token_count + m.response_token_count) as f64,
        Covariate::PromptTokens => m.prompt_token_count as f64,
        Covariate::ResponseTokens => m.response_token_count as f64,
    }
}

fn ancova(ctx: &mut Ctx, sweeps: &[SweepCell]) -> (Vec<AncovaCell>, Vec<AncovaSummary>) {
    let table = ctx.table;
    let cfg = ctx.cfg;
    let significant: std::collections::BTreeSet<(String, String, String)> = sweeps
        .iter()
        .filter(|c| c.effect.significant)
        .map(|c| (c.effect.comparison.clone(), c.model_id.clone(), c.effect.metric.clone()))
        .collect();
    let mut cells = Vec::new();
    let mut summary = Vec::new();
    for c in cfg.comparisons.clone() {
        let label = c.label();
        let start = cells.len();
        for model in ctx.models.clone() {
            for (col, metric) in table.metrics.iter().enumerate() {
                let (mut y, mut g, mut x) = (Vec::new(), Vec::new(), Vec::new());
                for r in &ctx.rows {
                    let m = &r.meta;
                    if m.model_id != model || (m.cluster != c.target && m.cluster != c.reference) {
                        continue;
                    }
                    if let Some(v) = r.values[col] {
                        y.push(v);
                        g.push(m.cluster == c.target);
                        x.push(covariate(cfg, m));
                    }
                }
                let na = g.iter().filter(|&&b| b).count();
                if let Some(why) = insufficient(na, g.len() - na) {
                    ctx.skip("ancova", &model, &label, metric, why);
                    continue;
                }
                match ancova_group_p(&y, &g, &x) {
                    Ok(fit) if fit.p.is_finite() => cells.push(AncovaCell {
                        comparison: label.clone(),
                        model_id: model.clone(),
                        metric: metric.clone(),
                        n: y.len(),
                        group_effect: fit.group_effect,
                        p: fit.p,
                        retained: fit.p < cfg.alpha,
                        sweep_significant: significant.contains(&(label.clone(), model.clone(), metric.clone())),
                    }),
                    Ok(_) => ctx.skip("ancova", &model, &label, metric, "non-finite statistic"),
                    Err(e) => ctx.skip("ancova", &model, &label, metric, e.to_string()),
                }
            }
        }
        let mine = &cells[start..];
        summary.push(AncovaSummary {
            comparison: label,
            cells: mine.len(),
            retained: mine.iter().filter(|a| a.retained).count(),
            sweep_significant: mine.iter().filter(|a| a.sweep_significant).count(),
            retained_of_significant: mine.iter().filter(|a| a.retained && a.sweep_significant).count(),
        });
    }
    (cells, summary)
}

const FOUR_CLUSTERS: [Cluster; 4] = [Cluster::C1, Cluster::C2, Cluster::C3, Cluster::C4];

fn correlations(ctx: &mut Ctx) -> Result<Vec<CorrelationRow>, PipelineError> {
    let table = ctx.table;
    let rank = table.column("attn_eff_rank_mean")?;
    let flag = table.column("resp_contradiction")?;
    let mut out = Vec::new();
    for model in ctx.models.clone() {
        let (x, y): (Vec<f64>, Vec<f64>) = ctx
            .table
            .rows
            .iter()
            .filter(|r| r.meta.model_id == model && r.meta.is_t0() && FOUR_CLUSTERS.contains(&r.meta.cluster))
            .filter_map(|r| Some((r.values[rank]?, r.values[flag]?)))
            .unzip();
        match spearman(&x, &y) {
            Ok((rho, p)) if rho.is_finite() && p.is_finite() => {
                out.push(CorrelationRow { model_id: model.clone(), n: x.len(), rho, p })
            }
            Ok(_) => ctx.skip("correlation", &model, "T=0", "attn_eff_rank_mean", "non-finite statistic"),
            Err(e) => ctx.skip("correlation", &model, "T=0", "attn_eff_rank_mean", e.to_string()),
        }
    }
    Ok(out)
}

fn contradiction(ctx: &Ctx) -> Result<Vec<ContradictionRow>, PipelineError> {
    let table = ctx.table;
    let flag = table.column("resp_contradiction")?;
    let mut out = Vec::new();
    for model in &ctx.models {
        for cluster in Cluster::ALL {
            let flags: Vec<f64> = ctx
                .table
                .rows
                .iter()
                .filter(|r| r.meta.model_id == *model && r.meta.is_t0() && r.meta.cluster == cluster)
                .filter_map(|r| r.values[flag])
                .collect();
            if flags.is_empty() {
                continue;
            }
            let contradictions = flags.iter().filter(|&&f| f > 0.5).count();
            out.push(ContradictionRow {
                model_id: model.clone(),
                cluster,
                n: flags.len(),
                contradictions,
                rate: contradictions as f64 / flags.len() as f64,
            });
        }
    }
    Ok(out)
}

fn effect_row(e: &EffectResult) -> Vec<String> {
    vec![
        e.metric.clone(),
        e.comparison.clone(),
        e.n_a.to_string(),
        e.n_b.to_string(),
        fmt_f64(e.d),
        fmt_f64(e.ci_low),
        fmt_f64(e.ci_high),
        fmt_f64(e.p_raw),
        fmt_f64(e.p_bonf),
        fmt_f64(e.q_fdr),
        e.significant.to_string(),
    ]
}

const EFFECT_COLUMNS: [&str; 11] =
    ["metric", "comparison", "n_a", "n_b", "d", "ci_low", "ci_high", "p", "p_bonf", "q", "significant"];

fn write_tables(layout: &Layout, r: &AnalysisReport) -> Result<(), PipelineError> {
    let dir = layout.analysis_dir();
    let mut t = Tsv::new(["hypothesis", "model_id", "pool", "m", "assumption"].into_iter().chain(EFFECT_COLUMNS));
    for h in &r.hypotheses {
        let mut row = vec![
            h.hypothesis.clone(),
            h.model_id.clone(),
            h.pool.clone(),
            h.m.to_string(),
            h.assumption.clone().unwrap_or_default(),
        ];
        row.extend(effect_row(&h.effect));
        t.push(row);
    }
    t.write(&dir.join("hypotheses.tsv"))?;

    let mut t = Tsv::new(["model_id"].into_iter().chain(EFFECT_COLUMNS).chain(["large"]));
    for c in &r.sweeps {
        let mut row = vec![c.model_id.clone()];
        row.extend(effect_row(&c.effect));
        row.push(c.large.to_string());
        t.push(row);
    }
    t.write(&dir.join("sweeps.tsv"))?;

    let mut t = Tsv::new(["comparison", "cells", "significant", "large"]);
    for c in &r.sweep_counts {
        t.push(vec![c.comparison.clone(), c.cells.to_string(), c.significant.to_string(), c.large.to_string()]);
    }
    t.write(&dir.join("sweep_counts.tsv"))?;

    let mut t = Tsv::new(["model_id", "metric", "n", "d", "w", "exact", "p", "q", "significant"]);
    for c in &r.ablation {
        t.push(vec![
            c.model_id.clone(),
            c.metric.clone(),
            c.n.to_string(),
            fmt_f64(c.d),
            fmt_f64(c.w),
            c.exact.to_string(),
            fmt_f64(c.p),
            fmt_f64(c.q),
            c.significant.to_string(),
        ]);
    }
    t.write(&dir.join("ablation.tsv"))?;

    let mut t = Tsv::new(["model_id", "comparison", "layer", "n_a", "n_b", "d"]);
    for c in &r.layer_d {
        t.push(vec![
            c.model_id.clone(),
            c.comparison.clone(),
            c.layer.to_string(),
            c.n_a.to_string(),
            c.n_b.to_string(),
            fmt_f64(c.d),
        ]);
    }
    t.write(&dir.join("layer_d.tsv"))?;

    let mut t =
        Tsv::new(["comparison", "model_id", "metric", "n", "group_effect", "p", "retained", "sweep_significant"]);
    for c in &r.ancova {
        t.push(vec![
            c.comparison.clone(),
            c.model_id.clone(),
            c.metric.clone(),
            c.n.to_string(),
            fmt_f64(c.group_effect),
            fmt_f64(c.p),
            c.retained.to_string(),
            c.sweep_significant.to_string(),
        ]);
    }
    t.write(&dir.join("ancova.tsv"))?;

    let mut t = Tsv::new(["model_id", "n", "rho", "p"]);
    for c in &r.correlations {
        t.push(vec![c.model_id.clone(), c.n.to_string(), fmt_f64(c.rho), fmt_f64(c.p)]);
    }
    t.write(&dir.join("correlation.tsv"))?;

    let mut t = Tsv::new(["model_id", "cluster", "n", "contradictions", "rate"]);
    for c in &r.contradiction {
        t.push(vec![
            c.model_id.clone(),
            c.cluster.label().into(),
            c.n.to_string(),
            c.contradictions.to_string(),
            fmt_f64(c.rate),
        ]);
    }
    t.write(&dir.join("contradiction.tsv"))?;

    let mut t = Tsv::new(["analysis", "model_id", "comparison", "metric", "reason"]);
    for s in &r.skipped {
        t.push(vec![s.analysis.clone(), s.model_id.clone(), s.comparison.clone(), s.metric.clone(), s.reason.clone()]);
    }
    t.write(&dir.join("skipped.tsv"))?;
    write_json(&layout.analysis_json(), r)
}

/// Runs every analysis over the metric table written by [`cmd_metrics`](super::cmd_metrics).
pub fn cmd_analyze(cfg: &AnalysisConfig) -> Result<AnalysisReport, PipelineError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out);
    let table = MetricTable::load(&require("metrics", layout.metrics_table())?)?;
    let profiles = LayerProfiles::load(&require("metrics", layout.layer_profiles())?)?;
    let rows: Vec<&MetricRow> = table.rows.iter().filter(|r| !cfg.t0_only || r.meta.is_t0()).collect();
    let mut ctx = Ctx { cfg, table: &table, models: table.models(), rows, skipped: Vec::new() };

    let hypotheses = hypotheses(&mut ctx)?;
    let (sweeps, sweep_counts) = sweeps(&mut ctx);
    let ablation = ablation(&mut ctx);
    let layer_d = layer_profiles(&mut ctx, &profiles);
    let (ancova, ancova_summary) = ancova(&mut ctx, &sweeps);
    let correlations = correlations(&mut ctx)?;
    let contradiction = contradiction(&ctx)?;

    let report = AnalysisReport {
        records: ctx.rows.len(),
        models: ctx.models.clone(),
        t0_only: cfg.t0_only,
        alpha: cfg.alpha,
        fdr_q: cfg.fdr_q,
        large_effect: cfg.large_effect,
        bootstrap_iterations: cfg.bootstrap_iterations,
        covariate: cfg.covariate,
        ablation_significant: ablation.iter().filter(|c| c.significant).count(),
        ablation_large: ablation.iter().filter(|c| c.significant && c.d.abs() > cfg.large_effect).count(),
        hypotheses,
        sweeps,
        sweep_counts,
        ablation,
        layer_d,
        ancova,
        ancova_summary,
        correlations,
        contradiction,
        skipped: ctx.skipped,
    };
    write_tables(&layout, &report)?;
    Ok(report)
}
