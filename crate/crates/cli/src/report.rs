//! report.json, graph.dot and histogram CSV writers.

use std::fmt::Write as _;
use std::path::Path;

use dircause::inference::PairTestResult;
use dircause::{CausalityGraph, MeasureKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub software: String,
    pub version: String,
    pub config_hash: String,
    pub k_values: Vec<usize>,
    pub lag: Option<usize>,
    pub alpha: f64,
    pub n_tests: usize,
    pub n_surrogates_per_block: usize,
    pub surrogate_seed: u64,
    pub data_seed: Option<u64>,
    pub rng: String,
    pub n_blocks: usize,
    pub block_len: usize,
    pub decision_rate: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRow {
    pub label: String,
    pub kind: MeasureKind,
    pub source: String,
    pub target: String,
    pub side: Vec<String>,
    pub k: usize,
    pub lag: usize,
    pub threshold: f64,
    pub detect_rate: f64,
    pub decision: bool,
    pub observed_mean: f64,
    pub surrogate_mean: f64,
    pub observed: Vec<f64>,
    pub surrogate: Vec<f64>,
    /// Raw variance ratios of the observed blocks (linear-prediction kinds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_ratio: Option<Vec<f64>>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl TestRow {
    pub fn from_result(r: &PairTestResult) -> Self {
        let observed = r.observed_values();
        let surrogate = r.surrogate_values();
        let observed_ratio =
            r.spec.kind.is_geweke().then(|| r.observed.iter().map(|v| v.raw_ratio.unwrap_or(f64::NAN)).collect());
        Self {
            label: r.spec.label(),
            kind: r.spec.kind,
            source: r.spec.source.clone(),
            target: r.spec.target.clone(),
            side: r.spec.side.clone(),
            k: r.spec.est.k,
            lag: r.spec.window(),
            threshold: r.threshold,
            detect_rate: r.detect_rate,
            decision: r.decision,
            observed_mean: mean(&observed),
            surrogate_mean: mean(&surrogate),
            observed,
            surrogate,
            observed_ratio,
        }
    }

    /// File stem used for the histogram dump.
    pub fn file_stem(&self) -> String {
        let mut s = format!("{}_{}_{}", self.kind.short_name(), self.source, self.target);
        if !self.side.is_empty() {
            s.push_str("_given_");
            s.push_str(&self.side.join("_"));
        }
        let _ = write!(s, "_k{}", self.k);
        s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<CausalityGraph>,
    pub tests: Vec<TestRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: Metadata,
    pub runs: Vec<Run>,
}

impl Report {
    pub fn read_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Json { path: path.to_path_buf(), source: e })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// First row matching kind, source and target.
    pub fn find(&self, kind: MeasureKind, source: &str, target: &str) -> Option<&TestRow> {
        self.runs.iter().flat_map(|r| &r.tests).find(|t| t.kind == kind && t.source == source && t.target == target)
    }
}

/// DOT text with the config hash as a leading comment.
pub fn graph_dot(graph: &CausalityGraph, hash: &str) -> String {
    format!("// config_hash: {hash}\n{}", graph.to_dot())
}

/// `block,observed,surrogate_0,...` with the config hash as a `#` comment.
pub fn histogram_csv(row: &TestRow, hash: &str) -> String {
    let n_blocks = row.observed.len();
    let per_block = row.surrogate.len().checked_div(n_blocks).unwrap_or(0);
    let mut s = format!("# config_hash: {hash}\n# {}\nblock,observed", row.label);
    for j in 0..per_block {
        let _ = write!(s, ",surrogate_{j}");
    }
    s.push('\n');
    for (b, obs) in row.observed.iter().enumerate() {
        let _ = write!(s, "{b},{obs}");
        for v in &row.surrogate[b * per_block..(b + 1) * per_block] {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}
