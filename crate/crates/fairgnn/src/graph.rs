//! Immutable graph data model: features, adjacency, labels, sensitive
//! attributes, index sets, splits, and adjacency normalization.

use crate::error::{Error, Result};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sparse matrix in CSR form. Row indices within a row are kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets. Duplicate
    /// coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::Structural(format!(
                    "triplet ({r}, {c}) out of bounds for {rows}x{cols} matrix"
                )));
            }
            entries.push((r, c, v));
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }

        let mut indptr = vec![0usize; rows + 1];
        for &(r, _, _) in &merged {
            indptr[r + 1] += 1;
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let indices = merged.iter().map(|e| e.1).collect();
        let data = merged.iter().map(|e| e.2).collect();
        Ok(Self { rows, cols, indptr, indices, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Stored entries of one row as (column, value) pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.data[lo..hi].iter().copied())
    }

    /// Value at (r, c), zero when the entry is not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r)
            .find(|&(col, _)| col == c)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    /// All stored entries as triplets, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out.push((r, c, v));
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        let flipped: Vec<(usize, usize, f64)> =
            self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        SparseMatrix::from_triplets(self.cols, self.rows, &flipped)
            .expect("transpose of a valid matrix is valid")
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// Dense product `self * rhs`.
    pub fn matmul_dense(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        if rhs.nrows() != self.cols {
            return Err(Error::Shape {
                op: "spmm",
                detail: format!(
                    "sparse is {}x{} but dense has {} rows",
                    self.rows,
                    self.cols,
                    rhs.nrows()
                ),
            });
        }
        let k = rhs.ncols();
        let mut out = Array2::<f64>::zeros((self.rows, k));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                for j in 0..k {
                    out[(r, j)] += v * rhs[(c, j)];
                }
            }
        }
        Ok(out)
    }

    /// Dense product `self^T * rhs` without materializing the transpose.
    pub fn transpose_matmul_dense(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        if rhs.nrows() != self.rows {
            return Err(Error::Shape {
                op: "spmm-transpose",
                detail: format!(
                    "sparse^T is {}x{} but dense has {} rows",
                    self.cols,
                    self.rows,
                    rhs.nrows()
                ),
            });
        }
        let k = rhs.ncols();
        let mut out = Array2::<f64>::zeros((self.cols, k));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                for j in 0..k {
                    out[(c, j)] += v * rhs[(r, j)];
                }
            }
        }
        Ok(out)
    }

    /// Row sums (degrees when the matrix is a binary adjacency).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }
}

/// Builds a binary, symmetric, zero-diagonal adjacency matrix from undirected
/// edges. Both edge orientations are stored; duplicates collapse to a single
/// entry. Self-edges are rejected here (loaders drop them before this point).
pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<SparseMatrix> {
    let mut triplets = Vec::with_capacity(edges.len() * 2);
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::Structural(format!(
                "edge ({a}, {b}) references a node outside 0..{n}"
            )));
        }
        if a == b {
            return Err(Error::Structural(format!("self-edge on node {a}")));
        }
        triplets.push((a, b, 1.0));
        triplets.push((b, a, 1.0));
    }
    triplets.sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    triplets.dedup_by(|x, y| x.0 == y.0 && x.1 == y.1);
    SparseMatrix::from_triplets(n, n, &triplets)
}

/// Immutable semi-supervised graph dataset.
///
/// Labels and sensitive attributes are optional per node: every node in
/// `labeled` carries both, nodes in `unlabeled` may carry neither.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub n: usize,
    /// Node features, n x d.
    pub features: Array2<f64>,
    /// Symmetric binary adjacency with zero diagonal.
    pub adjacency: SparseMatrix,
    /// Binary target label per node, where observed.
    pub labels: Vec<Option<bool>>,
    /// Binary sensitive attribute per node, where observed.
    pub sensitive: Vec<Option<bool>>,
    /// Indices with both label and sensitive attribute observed.
    pub labeled: Vec<usize>,
    /// The complement of `labeled`.
    pub unlabeled: Vec<usize>,
}

impl Dataset {
    /// Assembles a dataset, deriving the labeled/unlabeled partition from
    /// which nodes carry both a label and a sensitive attribute.
    pub fn new(
        features: Array2<f64>,
        adjacency: SparseMatrix,
        labels: Vec<Option<bool>>,
        sensitive: Vec<Option<bool>>,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || sensitive.len() != n {
            return Err(Error::Structural(format!(
                "labels ({}) and sensitive ({}) must both have length n = {n}",
                labels.len(),
                sensitive.len()
            )));
        }
        if adjacency.rows() != n || adjacency.cols() != n {
            return Err(Error::Structural(format!(
                "adjacency is {}x{} but n = {n}",
                adjacency.rows(),
                adjacency.cols()
            )));
        }
        let (labeled, unlabeled): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| labels[i].is_some() && sensitive[i].is_some());
        Ok(Self { n, features, adjacency, labels, sensitive, labeled, unlabeled })
    }

    /// Feature dimensionality d.
    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }
}

/// One violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    Asymmetry { i: usize, j: usize },
    NonzeroDiagonal { i: usize },
    NonBinaryAdjacency { i: usize, j: usize },
    NonFiniteFeature { node: usize, dim: usize },
    LabeledMissingLabel { node: usize },
    LabeledMissingSensitive { node: usize },
    PartitionError { detail: String },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Asymmetry { i, j } => write!(f, "A[{i}][{j}] != A[{j}][{i}]"),
            Violation::NonzeroDiagonal { i } => write!(f, "A[{i}][{i}] != 0"),
            Violation::NonBinaryAdjacency { i, j } => write!(f, "A[{i}][{j}] not in {{0, 1}}"),
            Violation::NonFiniteFeature { node, dim } => {
                write!(f, "feature X[{node}][{dim}] is not finite")
            }
            Violation::LabeledMissingLabel { node } => {
                write!(f, "labeled node {node} has no target label")
            }
            Violation::LabeledMissingSensitive { node } => {
                write!(f, "labeled node {node} has no sensitive attribute")
            }
            Violation::PartitionError { detail } => write!(f, "index partition: {detail}"),
        }
    }
}

/// Report of all dataset invariant violations. Empty iff the dataset is valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every [`Dataset`] invariant and reports all violations found.
/// Never errors: an invalid dataset yields a non-empty report.
pub fn validate_dataset(dataset: &Dataset) -> ValidationReport {
    let mut violations = Vec::new();
    let a = &dataset.adjacency;

    for (i, j, v) in a.triplets() {
        if v != 0.0 && v != 1.0 {
            violations.push(Violation::NonBinaryAdjacency { i, j });
        }
        if i == j && v != 0.0 {
            violations.push(Violation::NonzeroDiagonal { i });
        }
        if a.get(j, i) != v {
            violations.push(Violation::Asymmetry { i, j });
        }
    }

    for ((node, dim), &v) in dataset.features.indexed_iter() {
        if !v.is_finite() {
            violations.push(Violation::NonFiniteFeature { node, dim });
        }
    }

    for &i in &dataset.labeled {
        if dataset.labels.get(i).map_or(true, |l| l.is_none()) {
            violations.push(Violation::LabeledMissingLabel { node: i });
        }
        if dataset.sensitive.get(i).map_or(true, |s| s.is_none()) {
            violations.push(Violation::LabeledMissingSensitive { node: i });
        }
    }

    let mut seen = vec![0u8; dataset.n];
    for &i in dataset.labeled.iter().chain(dataset.unlabeled.iter()) {
        if i >= dataset.n {
            violations.push(Violation::PartitionError { detail: format!("index {i} out of range") });
        } else {
            seen[i] += 1;
        }
    }
    for (i, &count) in seen.iter().enumerate() {
        if count != 1 {
            violations.push(Violation::PartitionError {
                detail: format!("node {i} appears {count} times across L and U"),
            });
        }
    }

    ValidationReport { violations }
}

/// Symmetrically normalized adjacency: D^(-1/2) (A + self_loops * I) D^(-1/2),
/// with all-zero rows for isolated nodes.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    pub matrix: SparseMatrix,
    pub self_loops: bool,
}

/// Computes the symmetric normalization of a binary adjacency matrix.
///
/// Degrees are taken over `A + I` when `self_loops` is set (the standard GCN
/// renormalization) and over `A` alone otherwise. Rows of isolated nodes stay
/// all-zero under the 0^(-1/2) * 0 = 0 convention.
pub fn normalize_adjacency(a: &SparseMatrix, self_loops: bool) -> Result<NormalizedAdjacency> {
    if a.rows() != a.cols() {
        return Err(Error::Structural(format!(
            "adjacency must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    for (i, j, v) in a.triplets() {
        if v < 0.0 {
            return Err(Error::Structural(format!("negative adjacency entry at ({i}, {j})")));
        }
        if v != 0.0 && v != 1.0 {
            return Err(Error::Structural(format!(
                "adjacency entry at ({i}, {j}) is {v}, expected binary"
            )));
        }
        if i == j && v != 0.0 {
            return Err(Error::Structural(format!("unexpected self-loop at node {i}")));
        }
    }
    if !a.is_symmetric() {
        return Err(Error::Structural("adjacency is not symmetric".into()));
    }

    let n = a.rows();
    let mut degrees = a.row_sums();
    if self_loops {
        for d in &mut degrees {
            *d += 1.0;
        }
    }
    let inv_sqrt: Vec<f64> =
        degrees.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();

    let mut triplets = Vec::with_capacity(a.nnz() + if self_loops { n } else { 0 });
    for (i, j, _) in a.triplets() {
        triplets.push((i, j, inv_sqrt[i] * inv_sqrt[j]));
    }
    if self_loops {
        for i in 0..n {
            triplets.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
        }
    }
    Ok(NormalizedAdjacency { matrix: SparseMatrix::from_triplets(n, n, &triplets)?, self_loops })
}

/// Row-normalized adjacency D^(-1) A used for neighbor-mean aggregation.
/// Isolated nodes get an all-zero row (their neighbor mean is zero).
pub fn row_mean_matrix(a: &SparseMatrix) -> Result<SparseMatrix> {
    if a.rows() != a.cols() {
        return Err(Error::Structural(format!(
            "adjacency must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let degrees = a.row_sums();
    let mut triplets = Vec::with_capacity(a.nnz());
    for (i, j, v) in a.triplets() {
        if degrees[i] > 0.0 {
            triplets.push((i, j, v / degrees[i]));
        }
    }
    SparseMatrix::from_triplets(a.rows(), a.cols(), &triplets)
}

/// Train/validation/test node index sets plus the seed they were drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Draws disjoint train/val/test sets. Validation and test each take
/// floor(0.25 n) nodes; the training set takes `labeled_count` nodes from the
/// dataset's labeled set. Identical seeds yield identical splits.
pub fn make_splits(dataset: &Dataset, labeled_count: usize, seed: u64) -> Result<Splits> {
    let n = dataset.n;
    let quarter = n / 4;
    if labeled_count > n.saturating_sub(2 * quarter) {
        return Err(Error::Config(format!(
            "labeled_count {labeled_count} exceeds capacity {} for n = {n}",
            n.saturating_sub(2 * quarter)
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut val: Vec<usize> = order[..quarter].to_vec();
    let mut test: Vec<usize> = order[quarter..2 * quarter].to_vec();

    let mut is_labeled = vec![false; n];
    for &i in &dataset.labeled {
        is_labeled[i] = true;
    }
    let mut train: Vec<usize> =
        order[2 * quarter..].iter().copied().filter(|&i| is_labeled[i]).take(labeled_count).collect();
    if train.len() < labeled_count {
        return Err(Error::Config(format!(
            "only {} labeled nodes available outside val/test, need {labeled_count}",
            train.len()
        )));
    }

    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Splits { train, val, test, seed })
}

impl Splits {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
