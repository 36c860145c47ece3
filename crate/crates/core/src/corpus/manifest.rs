// SPDX-License-Identifier: MIT OR Apache-2.0

//! Line-delimited JSON manifests.
//!
//! Each line is one [`PromptMeta`] object. An optional first line of the form
//! `{"schema_version": 1, "full_corpus": true}` declares the schema version
//! and whether the manifest claims to hold the full 300-prompt inventory for
//! every (model, temperature) it covers.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Group, IntegrityIssue, PromptMeta};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    schema_version: u32,
    #[serde(default)]
    full_corpus: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub full_corpus: bool,
    pub entries: Vec<PromptMeta>,
}

/// A level-8 / level-(-5) minimal pair, by entry index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkedPair {
    pub pair_id: String,
    pub self_ref: usize,
    pub control: usize,
}

type PairKey<'a> = (&'a str, u64, &'a str);

fn pair_key<'a>(e: &'a PromptMeta, pid: &'a str) -> PairKey<'a> {
    (e.model_id.as_str(), e.temperature.to_bits(), pid)
}

impl Default for CorpusManifest {
    fn default() -> Self {
        Self { schema_version: SCHEMA_VERSION, full_corpus: false, entries: Vec::new() }
    }
}

impl CorpusManifest {
    pub fn new(entries: Vec<PromptMeta>) -> Self {
        Self { entries, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, prompt_id: &str) -> Option<&PromptMeta> {
        self.entries.iter().find(|e| e.prompt_id == prompt_id)
    }

    /// All minimal pairs, sorted by model, temperature and pair id. A pair id links one
    /// level-8 and one level-(-5) entry within each (model, temperature) run.
    pub fn linked_pairs(&self) -> Vec<LinkedPair> {
        let mut by_id: BTreeMap<PairKey, (Option<usize>, Option<usize>)> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(pid) = &e.pair_id {
                let slot = by_id.entry(pair_key(e, pid)).or_default();
                match e.group {
                    Group::AblSr => slot.0 = Some(i),
                    Group::AblCtrl => slot.1 = Some(i),
                    _ => {}
                }
            }
        }
        by_id
            .into_iter()
            .filter_map(|((_, _, pid), (sr, ctrl))| {
                Some(LinkedPair { pair_id: pid.to_string(), self_ref: sr?, control: ctrl? })
            })
            .collect()
    }

    /// Validates every manifest-level invariant.
    pub fn validate(&self) -> Result<(), IntegrityIssue> {
        let mut seen = HashMap::new();
        for e in &self.entries {
            e.check()?;
            if seen.insert(e.prompt_id.as_str(), ()).is_some() {
                return Err(IntegrityIssue::DuplicateId(e.prompt_id.clone()));
            }
        }
        let mut pairs: BTreeMap<PairKey, Vec<i32>> = BTreeMap::new();
        for e in &self.entries {
            if let Some(pid) = &e.pair_id {
                pairs.entry(pair_key(e, pid)).or_default().push(e.level);
            }
        }
        for ((_, _, pid), mut levels) in pairs {
            levels.sort_unstable();
            if levels != [-5, 8] {
                return Err(IntegrityIssue::UnpairedPair(pid.to_string()));
            }
        }
        if self.full_corpus {
            self.check_complete()?;
        }
        Ok(())
    }

    fn check_complete(&self) -> Result<(), IntegrityIssue> {
        let mut cells: BTreeMap<(String, u64), BTreeMap<Group, usize>> = BTreeMap::new();
        for e in &self.entries {
            let key = (e.model_id.clone(), e.temperature.to_bits());
            *cells.entry(key).or_default().entry(e.group).or_default() += 1;
        }
        for ((model_id, tbits), counts) in cells {
            for g in Group::ALL {
                let got = counts.get(&g).copied().unwrap_or(0);
                if got != g.full_count() {
                    return Err(IntegrityIssue::GroupSizes {
                        model_id,
                        temperature: f64::from_bits(tbits),
                        detail: format!("group {} has {got} entries, expected {}", g.label(), g.full_count()),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Parses manifest text; line numbers in errors are 1-based.
pub fn parse_manifest(text: &str) -> Result<CorpusManifest, CorpusError> {
    let mut manifest = CorpusManifest::default();
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        if first {
            first = false;
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| CorpusError::Parse { line: lineno, message: e.to_string() })?;
            if value.get("schema_version").is_some() && value.get("prompt_id").is_none() {
                let header: ManifestHeader = serde_json::from_value(value)
                    .map_err(|e| CorpusError::Parse { line: lineno, message: e.to_string() })?;
                if header.schema_version != SCHEMA_VERSION {
                    return Err(CorpusError::Parse {
                        line: lineno,
                        message: format!("unsupported schema_version {}", header.schema_version),
                    });
                }
                manifest.schema_version = header.schema_version;
                manifest.full_corpus = header.full_corpus;
                continue;
            }
        }
        let entry: PromptMeta =
            serde_json::from_str(line).map_err(|e| CorpusError::Parse { line: lineno, message: e.to_string() })?;
        manifest.entries.push(entry);
    }
    manifest.validate().map_err(CorpusError::Integrity)?;
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest, CorpusError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| CorpusError::Parse { line: 0, message: format!("manifest is not UTF-8: {e}") })?;
    parse_manifest(&text)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &CorpusManifest) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let header = ManifestHeader { schema_version: manifest.schema_version, full_corpus: manifest.full_corpus };
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for e in &manifest.entries {
        serde_json::to_writer(&mut out, e).expect("entry serializes");
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    f.write_all(&out).map_err(|e| CorpusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Cluster;

    fn line(id: &str, group: &str, cluster: &str, level: i32, pair: Option<&str>) -> String {
        let pair = pair.map(|p| format!("\"{p}\"")).unwrap_or_else(|| "null".into());
        format!(
            r#"{{"prompt_id":"{id}","text":"t","level":{level},"group":"{group}","cluster":"{cluster}","temperature":0.0,"model_id":"m","pair_id":{pair},"response_text":"","prompt_token_count":3,"response_token_count":0}}"#
        )
    }

    #[test]
    fn empty_file_gives_empty_manifest() {
        let m = parse_manifest("").unwrap();
        assert!(m.is_empty());
        assert!(!m.full_corpus);
    }

    #[test]
    fn cluster_mismatch_is_integrity_error() {
        let err = parse_manifest(&line("a", "paradox", "C1", 2, None)).unwrap_err();
        assert!(matches!(err, CorpusError::Integrity(IntegrityIssue::ClusterMismatch { .. })), "{err}");
    }

    #[test]
    fn linked_pair() {
        let text =
            [line("a", "abl-ctrl", "NONE", -5, Some("p01")), line("b", "abl-sr", "NONE", 8, Some("p01"))].join("\n");
        let m = parse_manifest(&text).unwrap();
        let pairs = m.linked_pairs();
        assert_eq!(pairs, vec![LinkedPair { pair_id: "p01".into(), self_ref: 1, control: 0 }]);
    }

    #[test]
    fn pair_ids_repeat_across_temperatures() {
        let hot = |l: String| l.replace("\"temperature\":0.0", "\"temperature\":0.7");
        let text = [
            line("a", "abl-ctrl", "NONE", -5, Some("p01")),
            line("b", "abl-sr", "NONE", 8, Some("p01")),
            hot(line("c", "abl-ctrl", "NONE", -5, Some("p01"))),
            hot(line("d", "abl-sr", "NONE", 8, Some("p01"))),
        ]
        .join("\n");
        let m = parse_manifest(&text).unwrap();
        let pairs = m.linked_pairs();
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[1].self_ref, pairs[1].control), (3, 2));
        let broken = [line("a", "abl-ctrl", "NONE", -5, Some("p01")), hot(line("b", "abl-sr", "NONE", 8, Some("p01")))];
        assert!(parse_manifest(&broken.join("\n")).is_err());
    }

    #[test]
    fn unpaired_and_duplicate_ids_rejected() {
        let err = parse_manifest(&line("a", "abl-ctrl", "NONE", -5, Some("p01"))).unwrap_err();
        assert!(matches!(err, CorpusError::Integrity(IntegrityIssue::UnpairedPair(_))));
        let text = [line("a", "control", "C1", 0, None), line("a", "control", "C1", 0, None)].join("\n");
        assert!(matches!(parse_manifest(&text).unwrap_err(), CorpusError::Integrity(IntegrityIssue::DuplicateId(_))));
        let err = parse_manifest(&line("a", "control", "C1", 0, Some("p9"))).unwrap_err();
        assert!(matches!(err, CorpusError::Integrity(IntegrityIssue::PairOnWrongLevel { .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!("{}\n\n{{not json", line("a", "control", "C1", 0, None));
        match parse_manifest(&text).unwrap_err() {
            CorpusError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn full_corpus_group_sizes() {
        let mut entries = Vec::new();
        let mut pair = 0;
        for g in Group::ALL {
            for i in 0..g.full_count() {
                let pid = g.is_paired().then(|| format!("p{:02}", i));
                entries.push(PromptMeta {
                    prompt_id: format!("{}-{i}", g.label()),
                    text: String::new(),
                    level: g.level(),
                    group: g,
                    cluster: g.cluster(),
                    temperature: 0.3,
                    model_id: "m".into(),
                    pair_id: pid,
                    response_text: String::new(),
                    prompt_token_count: 4,
                    response_token_count: 0,
                });
                pair += 1;
            }
        }
        assert_eq!(pair, 300);
        let mut m = CorpusManifest::new(entries);
        m.full_corpus = true;
        m.validate().unwrap();
        assert_eq!(m.linked_pairs().len(), 30);
        m.entries.retain(|e| e.prompt_id != "control-3");
        assert!(matches!(m.validate(), Err(IntegrityIssue::GroupSizes { .. })));
        assert_eq!(m.entries.iter().filter(|e| e.cluster == Cluster::C4).count(), 80);
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let text =
            [line("a", "abl-ctrl", "NONE", -5, Some("p01")), line("b", "abl-sr", "NONE", 8, Some("p01"))].join("\n");
        let m = parse_manifest(&text).unwrap();
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &m).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
    }
}
