//! Dataset I/O and synthetic biased-graph generation.
//!
//! File formats:
//! * nodes CSV: header `id,feat_0..feat_{d-1},label,sensitive`; `label` and
//!   `sensitive` are 0, 1 or empty.
//! * edges CSV: header `src,dst`, undirected; duplicates collapse, self-edges
//!   drop with a warning.
//! * results: CSV cells in the `mean (std)` table style, or JSON.

use crate::error::{Error, Result};
use crate::graph::{adjacency_from_edges, validate_dataset, Dataset};
use crate::metrics::MetricsReport;
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Generator settings for a synthetic biased graph: node count, class and
/// group balances, label/attribute correlation, homophily edge probabilities,
/// and per-(y, s) feature mean shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    #[serde(default = "default_half")]
    pub label_balance: f64,
    #[serde(default = "default_half")]
    pub group_balance: f64,
    #[serde(default)]
    pub label_attr_correlation: f64,
    #[serde(default = "default_intra")]
    pub intra_edge_prob: f64,
    #[serde(default = "default_inter")]
    pub inter_edge_prob: f64,
    #[serde(default = "default_dim")]
    pub feature_dim: usize,
    #[serde(default)]
    pub feature_shift_y0_s0: f64,
    #[serde(default = "default_shift_small")]
    pub feature_shift_y0_s1: f64,
    #[serde(default = "default_shift_large")]
    pub feature_shift_y1_s0: f64,
    #[serde(default = "default_shift_both")]
    pub feature_shift_y1_s1: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_half() -> f64 {
    0.5
}
fn default_intra() -> f64 {
    0.02
}
fn default_inter() -> f64 {
    0.004
}
fn default_dim() -> usize {
    16
}
fn default_shift_small() -> f64 {
    0.5
}
fn default_shift_large() -> f64 {
    1.0
}
fn default_shift_both() -> f64 {
    1.5
}

impl SyntheticConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("synthetic config: {e}")))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
        Self::from_toml(&text)
    }

    fn shift(&self, y: bool, s: bool) -> f64 {
        match (y, s) {
            (false, false) => self.feature_shift_y0_s0,
            (false, true) => self.feature_shift_y0_s1,
            (true, false) => self.feature_shift_y1_s0,
            (true, true) => self.feature_shift_y1_s1,
        }
    }

    /// Joint cell probabilities implied by the balances and correlation,
    /// erroring with the violated Frechet bound when incompatible.
    pub fn joint_distribution(&self) -> Result<[[f64; 2]; 2]> {
        for (name, v) in [("label_balance", self.label_balance), ("group_balance", self.group_balance)]
        {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        for (name, v) in [
            ("intra_edge_prob", self.intra_edge_prob),
            ("inter_edge_prob", self.inter_edge_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")));
            }
        }
        if !(-1.0..=1.0).contains(&self.label_attr_correlation) {
            return Err(Error::Config(format!(
                "label_attr_correlation = {} must lie in [-1, 1]",
                self.label_attr_correlation
            )));
        }
        let py = self.label_balance;
        let ps = self.group_balance;
        let cov = self.label_attr_correlation * (py * (1.0 - py) * ps * (1.0 - ps)).sqrt();
        let p11 = py * ps + cov;
        let lower = (py + ps - 1.0).max(0.0);
        let upper = py.min(ps);
        if p11 < lower - 1e-12 || p11 > upper + 1e-12 {
            return Err(Error::Config(format!(
                "correlation {} implies P(y=1, s=1) = {p11:.6}, outside the Frechet bounds \
                 [{lower:.6}, {upper:.6}] for these balances",
                self.label_attr_correlation
            )));
        }
        let p11 = p11.clamp(lower, upper);
        let p10 = py - p11; // y=1, s=0
        let p01 = ps - p11; // y=0, s=1
        let p00 = 1.0 - p11 - p10 - p01;
        Ok([[p00, p01], [p10, p11]])
    }
}

/// Draws a dataset from the generator: (y, s) per node from the joint
/// distribution, edges Bernoulli-keyed on sensitive-attribute agreement,
/// features cell-mean plus unit Gaussian noise. Fully seed-deterministic;
/// every node is labeled.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.n < 2 {
        return Err(Error::Config(format!("n = {} is too small", cfg.n)));
    }
    if cfg.feature_dim == 0 {
        return Err(Error::Config("feature_dim must be positive".into()));
    }
    let joint = cfg.joint_distribution()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);

    // fixed draw order: cells, features, edges
    let mut labels = Vec::with_capacity(cfg.n);
    let mut sensitive = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let u: f64 = rng.random();
        let (y, s) = if u < joint[0][0] {
            (false, false)
        } else if u < joint[0][0] + joint[0][1] {
            (false, true)
        } else if u < joint[0][0] + joint[0][1] + joint[1][0] {
            (true, false)
        } else {
            (true, true)
        };
        labels.push(Some(y));
        sensitive.push(Some(s));
    }

    let mut features = Array2::zeros((cfg.n, cfg.feature_dim));
    for i in 0..cfg.n {
        let mean = cfg.shift(labels[i].unwrap(), sensitive[i].unwrap());
        for j in 0..cfg.feature_dim {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features[(i, j)] = mean + noise;
        }
    }

    let mut edges = Vec::new();
    if cfg.intra_edge_prob > 0.0 || cfg.inter_edge_prob > 0.0 {
        for i in 0..cfg.n {
            for j in (i + 1)..cfg.n {
                let p = if sensitive[i] == sensitive[j] {
                    cfg.intra_edge_prob
                } else {
                    cfg.inter_edge_prob
                };
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
    }
    let adjacency = adjacency_from_edges(cfg.n, &edges)?;
    Dataset::new(features, adjacency, labels, sensitive)
}

fn parse_binary(field: &str, path: &Path, line: usize, column: &str) -> Result<Option<bool>> {
    match field.trim() {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(Error::Schema(format!(
            "{}:{line}: column {column} must be 0, 1 or empty, got {other:?}",
            path.display()
        ))),
    }
}

/// Loads a dataset from the nodes/edges CSV pair. Node order follows the
/// file; edge endpoints refer to the `id` column. The result always passes
/// [`validate_dataset`].
pub fn load_dataset(nodes_path: &Path, edges_path: &Path) -> Result<Dataset> {
    let nodes_file = std::fs::File::open(nodes_path)
        .map_err(|e| Error::Io { path: nodes_path.to_path_buf(), source: e })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(nodes_file);

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{}: {e}", nodes_path.display())))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 4 || names[0] != "id" {
        return Err(Error::Schema(format!(
            "{}: expected header id,feat_0..,label,sensitive",
            nodes_path.display()
        )));
    }
    let d = names.len() - 3;
    for (k, name) in names[1..=d].iter().enumerate() {
        if *name != format!("feat_{k}") {
            return Err(Error::Schema(format!(
                "{}: feature column {} is named {name:?}, expected feat_{k}",
                nodes_path.display(),
                k + 1
            )));
        }
    }
    if names[d + 1] != "label" || names[d + 2] != "sensitive" {
        return Err(Error::Schema(format!(
            "{}: last two columns must be label,sensitive",
            nodes_path.display()
        )));
    }

    let mut ids = std::collections::HashMap::new();
    let mut feature_rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut sensitive = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2; // header occupies line 1
        let record = record.map_err(|e| Error::Parse {
            path: nodes_path.to_path_buf(),
            line,
            detail: e.to_string(),
        })?;
        if record.len() != names.len() {
            return Err(Error::Parse {
                path: nodes_path.to_path_buf(),
                line,
                detail: format!("expected {} fields, got {}", names.len(), record.len()),
            });
        }
        let id: u64 = record[0].trim().parse().map_err(|_| Error::Parse {
            path: nodes_path.to_path_buf(),
            line,
            detail: format!("bad node id {:?}", &record[0]),
        })?;
        if ids.insert(id, feature_rows.len()).is_some() {
            return Err(Error::Parse {
                path: nodes_path.to_path_buf(),
                line,
                detail: format!("duplicate node id {id}"),
            });
        }
        let mut row = Vec::with_capacity(d);
        for k in 0..d {
            let value: f64 = record[k + 1].trim().parse().map_err(|_| Error::Parse {
                path: nodes_path.to_path_buf(),
                line,
                detail: format!("bad feature value {:?} in feat_{k}", &record[k + 1]),
            })?;
            if !value.is_finite() {
                return Err(Error::Schema(format!(
                    "{}:{line}: non-finite feature in feat_{k}",
                    nodes_path.display()
                )));
            }
            row.push(value);
        }
        feature_rows.push(row);
        labels.push(parse_binary(&record[d + 1], nodes_path, line, "label")?);
        sensitive.push(parse_binary(&record[d + 2], nodes_path, line, "sensitive")?);
    }

    let n = feature_rows.len();
    if n == 0 {
        return Err(Error::Schema(format!("{}: no nodes", nodes_path.display())));
    }
    let mut features = Array2::zeros((n, d));
    for (i, row) in feature_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            features[(i, j)] = v;
        }
    }

    let edges_file = std::fs::File::open(edges_path)
        .map_err(|e| Error::Io { path: edges_path.to_path_buf(), source: e })?;
    let mut edge_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(edges_file);
    let mut edges = Vec::new();
    for (row_idx, record) in edge_reader.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| Error::Parse {
            path: edges_path.to_path_buf(),
            line,
            detail: e.to_string(),
        })?;
        let endpoint = |k: usize| -> Result<usize> {
            let id: u64 = record[k].trim().parse().map_err(|_| Error::Parse {
                path: edges_path.to_path_buf(),
                line,
                detail: format!("bad node id {:?}", &record[k]),
            })?;
            ids.get(&id).copied().ok_or_else(|| Error::Parse {
                path: edges_path.to_path_buf(),
                line,
                detail: format!("unknown node id {id}"),
            })
        };
        let a = endpoint(0)?;
        let b = endpoint(1)?;
        if a == b {
            log::warn!("{}:{line}: dropping self-edge on node {a}", edges_path.display());
            continue;
        }
        edges.push((a, b));
    }

    let dataset = Dataset::new(features, adjacency_from_edges(n, &edges)?, labels, sensitive)?;
    let report = validate_dataset(&dataset);
    if !report.is_valid() {
        return Err(Error::Structural(format!(
            "{}: invalid dataset: {}",
            nodes_path.display(),
            report
                .violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }
    Ok(dataset)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

/// Writes a dataset to the nodes/edges CSV pair, inverse of [`load_dataset`].
pub fn save_dataset(dataset: &Dataset, nodes_path: &Path, edges_path: &Path) -> Result<()> {
    let d = dataset.feature_dim();
    let mut nodes = String::from("id");
    for k in 0..d {
        nodes.push_str(&format!(",feat_{k}"));
    }
    nodes.push_str(",label,sensitive\n");
    let flag = |v: Option<bool>| v.map_or(String::new(), |b| (b as u8).to_string());
    for i in 0..dataset.n {
        nodes.push_str(&i.to_string());
        for k in 0..d {
            nodes.push_str(&format!(",{}", dataset.features[(i, k)]));
        }
        nodes.push_str(&format!(
            ",{},{}\n",
            flag(dataset.labels[i]),
            flag(dataset.sensitive[i])
        ));
    }
    write_file(nodes_path, &nodes)?;

    let mut edges = String::from("src,dst\n");
    for (i, j, _) in dataset.adjacency.triplets() {
        if i < j {
            edges.push_str(&format!("{i},{j}\n"));
        }
    }
    write_file(edges_path, &edges)
}

/// Mean and sample standard deviation of one metric over the seeds where it
/// was defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    /// How many seeds had the metric defined.
    pub defined: usize,
}

fn summarize(values: &[f64]) -> Option<MetricSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some(MetricSummary { mean, std, defined: values.len() })
}

/// Multi-seed outcome of one method: per-seed reports plus per-metric
/// mean/std over the seeds where each metric was defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub method: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<MetricsReport>,
    pub bacc: Option<MetricSummary>,
    pub auc: Option<MetricSummary>,
    pub f1: Option<MetricSummary>,
    pub delta_sp: Option<MetricSummary>,
    pub delta_eo: Option<MetricSummary>,
}

impl ExperimentResult {
    pub fn new(method: impl Into<String>, seeds: Vec<u64>, per_seed: Vec<MetricsReport>) -> Self {
        let collect = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Vec<f64> {
            per_seed.iter().filter_map(|r| f(r)).collect()
        };
        let bacc = summarize(&collect(&|r| r.bacc));
        let auc = summarize(&collect(&|r| r.auc));
        let f1 = summarize(&collect(&|r| Some(r.f1)));
        let delta_sp = summarize(&collect(&|r| r.delta_sp));
        let delta_eo = summarize(&collect(&|r| r.delta_eo));
        Self { method: method.into(), seeds, per_seed, bacc, auc, f1, delta_sp, delta_eo }
    }

    /// `mean (std)` cell with two decimals, or `undefined`.
    fn cell(summary: &Option<MetricSummary>) -> String {
        match summary {
            Some(s) => format!("{:.2} ({:.2})", s.mean, s.std),
            None => "undefined".to_string(),
        }
    }

    pub fn csv_header() -> &'static str {
        "method,bacc,auc,f1,delta_sp,delta_eo"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.method,
            Self::cell(&self.bacc),
            Self::cell(&self.auc),
            Self::cell(&self.f1),
            Self::cell(&self.delta_sp),
            Self::cell(&self.delta_eo)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

/// Writes experiment results in the paper's table layout (CSV) or as JSON.
pub fn write_result(results: &[ExperimentResult], path: &Path, format: ResultFormat) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let body = match format {
        ResultFormat::Csv => {
            let mut out = String::from(ExperimentResult::csv_header());
            out.push('\n');
            for r in results {
                out.push_str(&r.csv_row());
                out.push('\n');
            }
            out
        }
        ResultFormat::Json => serde_json::to_string_pretty(results)?,
    };
    file.write_all(body.as_bytes())
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}
