// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::table::{fmt_f64, read_json, write_json, MetricTable, Tsv};
use super::{require, AnalysisConfig, Layout, PipelineError};
use crate::corpus::Cluster;
use crate::stats::{crossval_logistic_auc, ClassifierReport};

/// Design matrix for C4-versus-rest classification within one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationRows {
    pub prompt_ids: Vec<String>,
    pub x: Vec<Vec<Option<f64>>>,
    pub y: Vec<bool>,
}

/// Records of `model_id` in the four clusters; the label is membership in C4.
pub fn classification_rows(table: &MetricTable, model_id: &str, t0_only: bool) -> ClassificationRows {
    let rows: Vec<_> = table
        .rows
        .iter()
        .filter(|r| r.meta.model_id == model_id && r.meta.cluster != Cluster::None)
        .filter(|r| !t0_only || r.meta.is_t0())
        .collect();
    ClassificationRows {
        prompt_ids: rows.iter().map(|r| r.meta.prompt_id.clone()).collect(),
        x: rows.iter().map(|r| r.values.clone()).collect(),
        y: rows.iter().map(|r| r.meta.cluster == Cluster::C4).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClassification {
    pub model_id: String,
    pub n: usize,
    pub positives: usize,
    pub metrics: Vec<String>,
    pub report: ClassifierReport,
}

impl ModelClassification {
    pub(crate) fn load_all(layout: &Layout) -> Result<Vec<Self>, PipelineError> {
        read_json(&require("classify", layout.classifier_json())?)
    }
}

/// Cross-validated C4-versus-rest logistic AUC per model.
pub fn cmd_classify(cfg: &AnalysisConfig) -> Result<Vec<ModelClassification>, PipelineError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out);
    let table = MetricTable::load(&require("metrics", layout.metrics_table())?)?;
    let mut out = Vec::new();
    for model_id in table.models() {
        let rows = classification_rows(&table, &model_id, cfg.t0_only);
        let report = crossval_logistic_auc(&rows.x, &rows.y, &cfg.classifier)?;
        out.push(ModelClassification {
            model_id,
            n: rows.y.len(),
            positives: rows.y.iter().filter(|&&b| b).count(),
            metrics: table.metrics.clone(),
            report,
        });
    }

    let mut folds = Tsv::new(["model_id", "fold", "auc", "iterations", "converged"]);
    let mut coefficients = Tsv::new(["model_id", "metric", "coefficient"]);
    for m in &out {
        for (f, (auc, p)) in m.report.fold_aucs.iter().zip(&m.report.folds).enumerate() {
            folds.push(vec![
                m.model_id.clone(),
                f.to_string(),
                fmt_f64(*auc),
                p.iterations.to_string(),
                p.converged.to_string(),
            ]);
        }
        for (metric, c) in m.metrics.iter().zip(&m.report.coefficients) {
            coefficients.push(vec![m.model_id.clone(), metric.clone(), fmt_f64(*c)]);
        }
    }
    folds.write(&layout.classify_dir().join("folds.tsv"))?;
    coefficients.write(&layout.classify_dir().join("coefficients.tsv"))?;
    write_json(&layout.classifier_json(), &out)?;
    Ok(out)
}
