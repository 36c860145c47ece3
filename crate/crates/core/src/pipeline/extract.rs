// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::{write_json, LayerProfiles, MetricRow, MetricTable, RowMeta, Tsv};
use super::{AnalysisConfig, Layout, PipelineError};
use crate::corpus::{load_manifest, read_record, ActivationRecord, PromptMeta};
use crate::metrics::{attn_eff_rank_profile, compute_all, metric_names, MetricVector, METRIC_COUNT};
use crate::toysim::dump_file_name;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestIssue {
    pub prompt_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub valid: usize,
    pub issues: Vec<IngestIssue>,
    /// Records lacking each optional tensor family.
    pub absent_optional: BTreeMap<String, usize>,
}

fn load_checked(dumps: &Path, entry: &PromptMeta) -> Result<ActivationRecord, String> {
    let rec = read_record(dumps.join(dump_file_name(&entry.prompt_id))).map_err(|e| e.to_string())?;
    if rec.meta != *entry {
        return Err("dump metadata differs from the manifest entry".into());
    }
    Ok(rec)
}

fn sorted_entries(cfg: &AnalysisConfig) -> Result<Vec<PromptMeta>, PipelineError> {
    let manifest = load_manifest(cfg.manifest_path()?)?;
    let mut entries = manifest.entries;
    entries.sort_by(|a, b| a.prompt_id.cmp(&b.prompt_id));
    Ok(entries)
}

/// Validates the manifest and every dump it references without computing metrics.
pub fn cmd_ingest_check(cfg: &AnalysisConfig) -> Result<IngestReport, PipelineError> {
    let entries = sorted_entries(cfg)?;
    let dumps = cfg.dump_dir()?;
    let checked: Vec<Result<Vec<&'static str>, String>> =
        entries.par_iter().map(|e| load_checked(&dumps, e).map(|r| r.absent_fields())).collect();
    let mut report = IngestReport { records: entries.len(), ..IngestReport::default() };
    for (entry, result) in entries.iter().zip(checked) {
        match result {
            Ok(absent) => {
                report.valid += 1;
                for name in absent {
                    *report.absent_optional.entry(name.to_string()).or_default() += 1;
                }
            }
            Err(message) => report.issues.push(IngestIssue { prompt_id: entry.prompt_id.clone(), message }),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub records: usize,
    pub computed: usize,
    pub failures: Vec<IngestIssue>,
    /// Null count per metric, registry order, metrics with no nulls omitted.
    pub null_counts: BTreeMap<String, usize>,
    /// Null count per cause.
    pub null_causes: BTreeMap<String, usize>,
    /// Records by spectral source (`exact` or `proxy`).
    pub spectral_sources: BTreeMap<String, usize>,
}

type Computed = (RowMeta, MetricVector, Vec<f64>);

/// Computes the metric vector of every manifest record and writes the metric, null-cause
/// and layer-profile tables. Unreadable records are skipped; more than
/// `max_failure_fraction` of them is a [`PipelineError::PartialFailure`] after the tables
/// are written.
pub fn cmd_metrics(cfg: &AnalysisConfig) -> Result<MetricsSummary, PipelineError> {
    let entries = sorted_entries(cfg)?;
    let dumps = cfg.dump_dir()?;
    let mut mcfg = cfg.metrics.clone();
    mcfg.markers = cfg.marker_tables()?;
    let results: Vec<Result<Computed, String>> = entries
        .par_iter()
        .map(|e| {
            let rec = load_checked(&dumps, e)?;
            Ok((RowMeta::from(e), compute_all(&rec, &mcfg), attn_eff_rank_profile(&rec)))
        })
        .collect();

    let mut summary = MetricsSummary { records: entries.len(), ..MetricsSummary::default() };
    let mut table = MetricTable { metrics: metric_names().map(String::from).collect(), rows: Vec::new() };
    let mut nulls = Tsv::new(["prompt_id", "metric", "cause"]);
    let mut profiles = LayerProfiles::default();
    let mut null_counts = vec![0usize; METRIC_COUNT];
    for (entry, result) in entries.iter().zip(results) {
        let (meta, mv, profile) = match result {
            Ok(x) => x,
            Err(message) => {
                summary.failures.push(IngestIssue { prompt_id: entry.prompt_id.clone(), message });
                continue;
            }
        };
        for (i, (name, v)) in mv.iter().enumerate() {
            if v.is_none() {
                null_counts[i] += 1;
                let cause = mv.null_causes().get(name).map(|c| c.to_string()).unwrap_or_default();
                *summary.null_causes.entry(cause.clone()).or_default() += 1;
                nulls.push(vec![meta.prompt_id.clone(), name.to_string(), cause]);
            }
        }
        *summary.spectral_sources.entry(mv.spectral_source.label().to_string()).or_default() += 1;
        profiles.by_record.insert(meta.prompt_id.clone(), profile);
        table.rows.push(MetricRow { meta, values: mv.values().to_vec() });
    }
    summary.computed = table.rows.len();
    summary.null_counts =
        metric_names().zip(null_counts).filter(|(_, c)| *c > 0).map(|(n, c)| (n.to_string(), c)).collect();

    let layout = Layout::new(&cfg.out);
    table.to_tsv().write(&layout.metrics_table())?;
    nulls.write(&layout.nulls_table())?;
    profiles.to_tsv().write(&layout.layer_profiles())?;
    write_json(&layout.metrics_summary(), &summary)?;

    let failed = summary.failures.len();
    if failed > 0 && failed as f64 > cfg.max_failure_fraction * summary.records as f64 {
        return Err(PipelineError::PartialFailure {
            failed,
            total: summary.records,
            threshold: cfg.max_failure_fraction,
        });
    }
    Ok(summary)
}
