// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::process::{Command, Output};

fn nctr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nctr")).args(args).output().expect("spawn nctr")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "per_cluster = 8\npairs = 4\nnonsense = 4\n[offsets]\nC4 = 2.0\nC3 = 1.0\n";

fn small_corpus(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("spec.toml");
    std::fs::write(&spec, SMALL).unwrap();
    let corpus = dir.join("corpus");
    let o = nctr(&["synth", "--spec", s(&spec), "--out", s(&corpus), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    corpus
}

#[test]
fn full_chain_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let manifest = corpus.join("manifest.jsonl");
    let out = dir.path().join("out");
    let o = nctr(&["ingest-check", "--manifest", s(&manifest)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("44 records, 44 valid"));
    for stage in ["metrics", "analyze", "classify", "toy", "report"] {
        let mut args = vec![stage, "--manifest", s(&manifest), "--out", s(&out)];
        if stage == "toy" {
            args.extend(["--runs", "10"]);
        }
        let o = nctr(&args);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let md = std::fs::read_to_string(out.join("report/report.md")).unwrap();
    assert!(md.contains("## Toy residual network"));
    assert!(out.join("report/plot_data.json").is_file());
    assert!(out.join("toy/runs.tsv").is_file());
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let manifest = corpus.join("manifest.jsonl");
    let reports: Vec<Vec<u8>> = ["1", "4"]
        .iter()
        .map(|jobs| {
            let out = dir.path().join(format!("out{jobs}"));
            for stage in ["metrics", "analyze", "classify", "report"] {
                let o = nctr(&[stage, "--manifest", s(&manifest), "--out", s(&out), "--jobs", jobs]);
                assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
            }
            std::fs::read(out.join("report/report.md")).unwrap()
        })
        .collect();
    assert!(reports[0] == reports[1]);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let cfg = dir.path().join("nctr.toml");
    let from_file = dir.path().join("from-file");
    let from_flag = dir.path().join("from-flag");
    std::fs::write(&cfg, format!("manifest = {:?}\nout = {:?}\n", s(&corpus.join("manifest.jsonl")), s(&from_file)))
        .unwrap();
    assert_eq!(code(&nctr(&["metrics", "--config", s(&cfg)])), 0);
    assert!(from_file.join("metrics/metrics.tsv").is_file());
    assert_eq!(code(&nctr(&["metrics", "--config", s(&cfg), "--out", s(&from_flag)])), 0);
    assert!(from_flag.join("metrics/metrics.tsv").is_file());
}

#[test]
fn usage_and_configuration_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&nctr(&["frobnicate"])), 1);
    assert_eq!(code(&nctr(&["metrics", "--jobs", "many"])), 1);
    assert_eq!(code(&nctr(&[])), 1);
    // no manifest anywhere
    assert_eq!(code(&nctr(&["metrics", "--out", s(dir.path())])), 1);
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let o = nctr(&["analyze", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));
    let spec = dir.path().join("spec.toml");
    std::fs::write(&spec, "[offsets]\nC7 = 1.0\n").unwrap();
    assert_eq!(code(&nctr(&["synth", "--spec", s(&spec), "--out", s(&dir.path().join("c"))])), 1);
    assert_eq!(code(&nctr(&["--help"])), 0);
}

#[test]
fn integrity_errors_exit_2_and_partial_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let manifest = corpus.join("manifest.jsonl");
    let out = dir.path().join("out");

    let o = nctr(&["report", "--out", s(&out), "--manifest", s(&manifest)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage metrics has not been run"));

    std::fs::write(corpus.join("dumps/syn-c2-003.nctr"), b"XXXX").unwrap();
    let o = nctr(&["ingest-check", "--manifest", s(&manifest)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("syn-c2-003"));
    assert_eq!(code(&nctr(&["metrics", "--manifest", s(&manifest), "--out", s(&out)])), 3);

    std::fs::write(&manifest, "{\"prompt_id\": 1}\n").unwrap();
    assert_eq!(code(&nctr(&["ingest-check", "--manifest", s(&manifest)])), 2);
}
