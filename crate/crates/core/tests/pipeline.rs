// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use nctr_core::corpus::{Cluster, Group};
use nctr_core::metrics::METRIC_COUNT;
use nctr_core::pipeline::{
    classification_rows, cmd_analyze, cmd_classify, cmd_ingest_check, cmd_metrics, cmd_report, cmd_synth,
    AnalysisConfig, Layout, MetricTable, PipelineError, Tsv,
};
use nctr_core::stats::{bh_fdr, crossval_logistic_auc, ClassifierConfig};
use nctr_core::toysim::SynthSpec;

fn small(mut s: SynthSpec) -> SynthSpec {
    s.per_cluster = 10;
    s.pairs = 6;
    s.nonsense = 6;
    s
}

fn config(corpus: &Path, out: &Path) -> AnalysisConfig {
    AnalysisConfig {
        manifest: Some(corpus.join("manifest.jsonl")),
        out: out.to_path_buf(),
        bootstrap_iterations: 300,
        ..AnalysisConfig::default()
    }
}

fn run_all(cfg: &AnalysisConfig) {
    cmd_metrics(cfg).unwrap();
    cmd_analyze(cfg).unwrap();
    cmd_classify(cfg).unwrap();
    cmd_report(cfg).unwrap();
}

#[test]
fn metric_table_has_one_row_per_record_and_every_column() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { per_cluster: 10, pairs: 0, nonsense: 0, ..SynthSpec::null() };
    assert_eq!(cmd_synth(&spec, 3, dir.path()).unwrap(), 40);
    let cfg = config(dir.path(), &dir.path().join("out"));
    let ingest = cmd_ingest_check(&cfg).unwrap();
    assert_eq!((ingest.records, ingest.valid), (40, 40));
    assert!(ingest.issues.is_empty());

    let summary = cmd_metrics(&cfg).unwrap();
    assert_eq!(summary.computed, 40);
    let table = MetricTable::load(&Layout::new(&cfg.out).metrics_table()).unwrap();
    assert_eq!(table.rows.len(), 40);
    assert_eq!(table.metrics.len(), METRIC_COUNT);
    assert!(table.rows.iter().all(|r| r.values.len() == METRIC_COUNT));
}

#[test]
fn large_model_records_have_gradient_and_lens_metrics_null() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec { large_model_style: true, ..small(SynthSpec::null()) };
    let n = cmd_synth(&spec, 4, dir.path()).unwrap();
    let cfg = config(dir.path(), &dir.path().join("out"));
    let summary = cmd_metrics(&cfg).unwrap();
    let nulls = Tsv::load(&Layout::new(&cfg.out).nulls_table()).unwrap();
    let mut missing: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in nulls.rows.iter().filter(|r| r[2].starts_with("missing_input")) {
        missing.entry(r[0].as_str()).or_default().push(r[1].as_str());
    }
    assert_eq!(missing.len(), n);
    for (id, metrics) in &missing {
        assert_eq!(metrics.len(), 27, "{id} {metrics:?}");
    }
    let always: Vec<_> = summary.null_counts.iter().filter(|(_, &c)| c == n).map(|(m, _)| m.as_str()).collect();
    assert_eq!(always.len(), 27, "{always:?}");
}

#[test]
fn sweep_and_contradiction_outputs_are_recomputable() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small(SynthSpec::signal()), 11, dir.path()).unwrap();
    let cfg = config(dir.path(), &dir.path().join("out"));
    cmd_metrics(&cfg).unwrap();
    let report = cmd_analyze(&cfg).unwrap();

    for count in &report.sweep_counts {
        let cells: Vec<_> = report.sweeps.iter().filter(|s| s.effect.comparison == count.comparison).collect();
        assert_eq!(cells.len(), count.cells);
        let p: Vec<f64> = cells.iter().map(|s| s.effect.p_raw).collect();
        let bh = bh_fdr(&p, cfg.fdr_q);
        assert_eq!(bh.rejected.iter().filter(|&&r| r).count(), count.significant, "{}", count.comparison);
        for (s, q) in cells.iter().zip(&bh.qvalues) {
            assert!((s.effect.q_fdr - q).abs() < 1e-12);
        }
        let large = cells.iter().filter(|s| s.effect.significant && s.effect.d.abs() > cfg.large_effect).count();
        assert_eq!(large, count.large);
    }

    let table = MetricTable::load(&Layout::new(&cfg.out).metrics_table()).unwrap();
    let flag = table.column("resp_contradiction").unwrap();
    for row in &report.contradiction {
        let vals: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.meta.model_id == row.model_id && r.meta.cluster == row.cluster && r.meta.is_t0())
            .filter_map(|r| r.values[flag])
            .collect();
        assert_eq!(vals.len(), row.n);
        assert_eq!(vals.iter().filter(|&&v| v == 1.0).count(), row.contradictions);
        assert!((row.rate - row.contradictions as f64 / row.n as f64).abs() < 1e-12);
    }
    assert_eq!(report.contradiction.iter().filter(|r| r.cluster != Cluster::None).count(), 4);
}

#[test]
fn hypotheses_use_their_reference_groups() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small(SynthSpec::signal()), 12, dir.path()).unwrap();
    let cfg = config(dir.path(), &dir.path().join("out"));
    cmd_metrics(&cfg).unwrap();
    let report = cmd_analyze(&cfg).unwrap();
    let h3 = report.hypotheses.iter().find(|h| h.hypothesis == "H3").unwrap();
    assert_eq!((h3.group, h3.reference), (Group::Paradox, Group::Nonsense));
    assert_eq!(h3.effect.n_b, 6);
    assert_eq!(report.hypotheses.len(), 5);
    // without the original models present, all tests form one pool
    assert!(report.hypotheses.iter().all(|h| h.m == 5));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small(SynthSpec::signal()), 21, dir.path()).unwrap();
    let runs: Vec<_> = [1, 3]
        .into_iter()
        .map(|threads| {
            let cfg = config(dir.path(), &dir.path().join(format!("out{threads}")));
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_all(&cfg));
            Layout::new(&cfg.out)
        })
        .collect();
    for file in [
        |l: &Layout| l.report_md(),
        |l: &Layout| l.plot_data(),
        |l: &Layout| l.analysis_json(),
        |l: &Layout| l.classifier_json(),
        |l: &Layout| l.metrics_table(),
    ] {
        let a = std::fs::read(file(&runs[0])).unwrap();
        let b = std::fs::read(file(&runs[1])).unwrap();
        assert!(a == b, "{} differs", file(&runs[0]).display());
    }
    let md = std::fs::read_to_string(runs[0].report_md()).unwrap();
    assert!(!md.contains(&dir.path().display().to_string()));
}

#[test]
fn stages_report_missing_upstream_outputs() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small(SynthSpec::null()), 5, dir.path()).unwrap();
    let cfg = config(dir.path(), &dir.path().join("out"));
    let stage = |e: PipelineError| match e {
        PipelineError::MissingUpstream { stage, .. } => stage,
        other => panic!("unexpected {other}"),
    };
    assert_eq!(stage(cmd_analyze(&cfg).unwrap_err()), "metrics");
    assert_eq!(stage(cmd_classify(&cfg).unwrap_err()), "metrics");
    assert_eq!(stage(cmd_report(&cfg).unwrap_err()), "metrics");
    cmd_metrics(&cfg).unwrap();
    assert_eq!(stage(cmd_report(&cfg).unwrap_err()), "analyze");
    cmd_analyze(&cfg).unwrap();
    let err = cmd_report(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert_eq!(stage(err), "classify");
    cmd_classify(&cfg).unwrap();
    let summary = cmd_report(&cfg).unwrap();
    assert!(!summary.includes_toy);
}

#[test]
fn too_many_unreadable_dumps_is_a_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&small(SynthSpec::null()), 6, dir.path()).unwrap();
    std::fs::write(dir.path().join("dumps/syn-c1-000.nctr"), b"NCTRgarbage").unwrap();
    let cfg = config(dir.path(), &dir.path().join("out"));
    let ingest = cmd_ingest_check(&cfg).unwrap();
    assert_eq!(ingest.issues.len(), 1);
    assert_eq!(ingest.issues[0].prompt_id, "syn-c1-000");

    let err = cmd_metrics(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let table = MetricTable::load(&Layout::new(&cfg.out).metrics_table()).unwrap();
    assert_eq!(table.rows.len(), ingest.records - 1);

    let lenient = AnalysisConfig { max_failure_fraction: 0.1, ..cfg };
    assert_eq!(cmd_metrics(&lenient).unwrap().failures.len(), 1);
}

#[test]
fn separable_clusters_classify_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small(SynthSpec::null());
    spec.per_cluster = 16;
    spec.layer_correlation = 0.9;
    spec.offsets.insert("C4".into(), 12.0);
    cmd_synth(&spec, 8, dir.path()).unwrap();
    let cfg = config(dir.path(), &dir.path().join("out"));
    cmd_metrics(&cfg).unwrap();
    let table = MetricTable::load(&Layout::new(&cfg.out).metrics_table()).unwrap();
    let rows = classification_rows(&table, &spec.model_id, false);
    assert_eq!(rows.y.len(), 64);
    assert_eq!(rows.y.iter().filter(|&&b| b).count(), 16);
    let report = crossval_logistic_auc(&rows.x, &rows.y, &ClassifierConfig::default()).unwrap();
    assert!(report.mean_auc >= 0.99, "{}", report.mean_auc);
}
