// SPDX-License-Identifier: MIT OR Apache-2.0

//! Tab-separated tables with round-trip float formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::PipelineError;
use crate::corpus::{Cluster, Group, PromptMeta};

pub const NA: &str = "NA";

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    let a = x.abs();
    if a == 0.0 || a.is_infinite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), fmt_f64)
}

fn parse_opt(s: &str) -> Result<Option<f64>, String> {
    if s == NA {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| format!("bad number {s:?}"))
}

/// An in-memory delimited table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tsv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Tsv {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Tsv { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let _ = writeln!(out, "{}", row.join("\t"));
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, PipelineError> {
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| PipelineError::table(path, 1, "empty table"))?
            .split('\t')
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split('\t').map(String::from).collect();
            if row.len() != header.len() {
                return Err(PipelineError::table(
                    path,
                    i + 2,
                    format!("{} fields, header has {}", row.len(), header.len()),
                ));
            }
            rows.push(row);
        }
        Ok(Tsv { header, rows })
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        write_text(path, &self.render())
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text, path)
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_text(path, &text)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::table(path, e.line(), e.to_string()))
}

/// Per-record identification carried alongside metric values.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMeta {
    pub prompt_id: String,
    pub model_id: String,
    pub group: Group,
    pub cluster: Cluster,
    pub level: i32,
    pub temperature: f64,
    pub pair_id: Option<String>,
    pub prompt_token_count: usize,
    pub response_token_count: usize,
}

impl RowMeta {
    pub fn is_t0(&self) -> bool {
        self.temperature.abs() < 1e-9
    }
}

impl From<&PromptMeta> for RowMeta {
    fn from(m: &PromptMeta) -> Self {
        RowMeta {
            prompt_id: m.prompt_id.clone(),
            model_id: m.model_id.clone(),
            group: m.group,
            cluster: m.cluster,
            level: m.level,
            temperature: m.temperature,
            pair_id: m.pair_id.clone(),
            prompt_token_count: m.prompt_token_count,
            response_token_count: m.response_token_count,
        }
    }
}

const META_COLUMNS: [&str; 9] = [
    "prompt_id",
    "model_id",
    "group",
    "cluster",
    "level",
    "temperature",
    "pair_id",
    "prompt_token_count",
    "response_token_count",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub meta: RowMeta,
    pub values: Vec<Option<f64>>,
}

/// The metric table: one row per record, one column per metric, sorted by prompt id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricTable {
    pub metrics: Vec<String>,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn column(&self, metric: &str) -> Result<usize, PipelineError> {
        self.metrics.iter().position(|m| m == metric).ok_or_else(|| PipelineError::MissingColumn(metric.into()))
    }

    /// Distinct model ids in sorted order.
    pub fn models(&self) -> Vec<String> {
        let mut m: Vec<String> = self.rows.iter().map(|r| r.meta.model_id.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn to_tsv(&self) -> Tsv {
        let mut t = Tsv::new(META_COLUMNS.iter().map(|s| s.to_string()).chain(self.metrics.iter().cloned()));
        for r in &self.rows {
            let m = &r.meta;
            let mut row = vec![
                m.prompt_id.clone(),
                m.model_id.clone(),
                m.group.label().to_string(),
                m.cluster.label().to_string(),
                m.level.to_string(),
                fmt_f64(m.temperature),
                m.pair_id.clone().unwrap_or_else(|| NA.to_string()),
                m.prompt_token_count.to_string(),
                m.response_token_count.to_string(),
            ];
            row.extend(r.values.iter().map(|&v| fmt_opt(v)));
            t.push(row);
        }
        t
    }

    pub fn from_tsv(t: &Tsv, path: &Path) -> Result<Self, PipelineError> {
        if t.header.len() < META_COLUMNS.len() || t.header[..META_COLUMNS.len()] != META_COLUMNS {
            return Err(PipelineError::table(path, 1, "metric table header must start with the record columns"));
        }
        let metrics = t.header[META_COLUMNS.len()..].to_vec();
        let mut rows = Vec::with_capacity(t.rows.len());
        for (i, f) in t.rows.iter().enumerate() {
            let line = i + 2;
            let err = |m: String| PipelineError::table(path, line, m);
            let int = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad count {s:?}")));
            let meta = RowMeta {
                prompt_id: f[0].clone(),
                model_id: f[1].clone(),
                group: Group::from_label(&f[2]).ok_or_else(|| err(format!("unknown group {:?}", f[2])))?,
                cluster: Cluster::from_label(&f[3]).ok_or_else(|| err(format!("unknown cluster {:?}", f[3])))?,
                level: f[4].parse().map_err(|_| err(format!("bad level {:?}", f[4])))?,
                temperature: parse_opt(&f[5]).map_err(&err)?.ok_or_else(|| err("missing temperature".into()))?,
                pair_id: (f[6] != NA).then(|| f[6].clone()),
                prompt_token_count: int(&f[7])?,
                response_token_count: int(&f[8])?,
            };
            let values = f[META_COLUMNS.len()..].iter().map(|s| parse_opt(s)).collect::<Result<_, _>>().map_err(err)?;
            rows.push(MetricRow { meta, values });
        }
        Ok(MetricTable { metrics, rows })
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_tsv(&Tsv::load(path)?, path)
    }
}

/// Per-record, per-layer attention effective rank.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerProfiles {
    pub by_record: BTreeMap<String, Vec<f64>>,
}

impl LayerProfiles {
    pub fn to_tsv(&self) -> Tsv {
        let mut t = Tsv::new(["prompt_id", "layer", "attn_eff_rank"]);
        for (id, values) in &self.by_record {
            for (l, v) in values.iter().enumerate() {
                t.push(vec![id.clone(), l.to_string(), fmt_f64(*v)]);
            }
        }
        t
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let t = Tsv::load(path)?;
        let mut by_record: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (i, f) in t.rows.iter().enumerate() {
            let err = |m: &str| PipelineError::table(path, i + 2, m);
            let layer: usize = f[1].parse().map_err(|_| err("bad layer"))?;
            let value = parse_opt(&f[2]).map_err(|m| err(&m))?.ok_or_else(|| err("missing value"))?;
            let v = by_record.entry(f[0].clone()).or_default();
            if v.len() != layer {
                return Err(err("layers must be listed in order"));
            }
            v.push(value);
        }
        Ok(LayerProfiles { by_record })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.0, 1.0, -2.5, 0.1 + 0.2, 1e-300, 3.2e-7, 12345.678, 1e20, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(2.5e-7), "2.5e-7");
        assert_eq!(fmt_f64(0.05), "0.05");
        assert_eq!(fmt_opt(None), "NA");
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Tsv::parse("a\tb\n1\n", Path::new("t.tsv")).is_err());
        let t = Tsv::parse("a\tb\n1\t2\n", Path::new("t.tsv")).unwrap();
        assert_eq!(t.render(), "a\tb\n1\t2\n");
    }
}
