//! Encoders (GCN, GraphSAGE) and the affine+sigmoid classifier head.

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, row_mean_matrix, SparseMatrix};
use crate::tape::{NodeId, Tape};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gcn,
    Sage,
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EncoderKind::Gcn => write!(f, "gcn"),
            EncoderKind::Sage => write!(f, "sage"),
        }
    }
}

/// One GraphSAGE layer: `relu(h W_self + mean_neigh(h) W_neigh)`, the
/// block-split equivalent of a linear map over concat(h, neighbor mean).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SageLayer {
    pub w_self: Array2<f64>,
    pub w_neigh: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EncoderWeights {
    Gcn(Vec<Array2<f64>>),
    Sage(Vec<SageLayer>),
}

/// All trainable state of one model plus its architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder: EncoderWeights,
    /// Classifier weights, hidden x 1.
    pub phi: Array2<f64>,
    /// Classifier bias, 1x1.
    pub bias: Array2<f64>,
    pub hidden: usize,
    pub depth: usize,
    /// Drop rate applied to every encoder layer input in training mode.
    pub dropout: f64,
    /// Seed the initial weights were drawn from.
    pub init_seed: u64,
}

fn uniform_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl ModelParams {
    /// Initializes weights uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
    /// from a seeded generator. All hidden layers have width `hidden`; the
    /// final embedding width equals `hidden`.
    pub fn init(
        kind: EncoderKind,
        in_dim: usize,
        hidden: usize,
        depth: usize,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("model depth must be at least 1".into()));
        }
        if hidden == 0 || in_dim == 0 {
            return Err(Error::Config("hidden and input dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} must lie in [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer_in = |i: usize| if i == 0 { in_dim } else { hidden };

        let encoder = match kind {
            EncoderKind::Gcn => EncoderWeights::Gcn(
                (0..depth).map(|i| uniform_init(&mut rng, layer_in(i), hidden, layer_in(i))).collect(),
            ),
            EncoderKind::Sage => EncoderWeights::Sage(
                (0..depth)
                    .map(|i| {
                        // fan-in of the concat(self, neighbor-mean) view
                        let fan = 2 * layer_in(i);
                        SageLayer {
                            w_self: uniform_init(&mut rng, layer_in(i), hidden, fan),
                            w_neigh: uniform_init(&mut rng, layer_in(i), hidden, fan),
                        }
                    })
                    .collect(),
            ),
        };
        let phi = uniform_init(&mut rng, hidden, 1, hidden);
        let bias = uniform_init(&mut rng, 1, 1, hidden);
        Ok(Self { encoder, phi, bias, hidden, depth, dropout, init_seed: seed })
    }

    pub fn encoder_kind(&self) -> EncoderKind {
        match self.encoder {
            EncoderWeights::Gcn(_) => EncoderKind::Gcn,
            EncoderWeights::Sage(_) => EncoderKind::Sage,
        }
    }

    /// All trainable matrices in a fixed order: encoder layers (SAGE: self
    /// then neighbor per layer), then phi, then bias. Optimizer state and
    /// tape binding both follow this order.
    pub fn matrices(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        match &self.encoder {
            EncoderWeights::Gcn(ws) => out.extend(ws.iter()),
            EncoderWeights::Sage(layers) => {
                for l in layers {
                    out.push(&l.w_self);
                    out.push(&l.w_neigh);
                }
            }
        }
        out.push(&self.phi);
        out.push(&self.bias);
        out
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = Vec::new();
        match &mut self.encoder {
            EncoderWeights::Gcn(ws) => out.extend(ws.iter_mut()),
            EncoderWeights::Sage(layers) => {
                for l in layers {
                    out.push(&mut l.w_self);
                    out.push(&mut l.w_neigh);
                }
            }
        }
        out.push(&mut self.phi);
        out.push(&mut self.bias);
        out
    }

    /// Checks that layer shapes chain consistently for the configured depth.
    pub fn validate_shapes(&self, in_dim: usize) -> Result<()> {
        let expect = |i: usize| if i == 0 { in_dim } else { self.hidden };
        let check = |name: String, m: &Array2<f64>, rows: usize, cols: usize| -> Result<()> {
            if m.nrows() != rows || m.ncols() != cols {
                return Err(Error::Shape {
                    op: "model-params",
                    detail: format!(
                        "{name} is {}x{}, expected {rows}x{cols}",
                        m.nrows(),
                        m.ncols()
                    ),
                });
            }
            Ok(())
        };
        match &self.encoder {
            EncoderWeights::Gcn(ws) => {
                if ws.len() != self.depth {
                    return Err(Error::Config(format!(
                        "encoder has {} layers but depth = {}",
                        ws.len(),
                        self.depth
                    )));
                }
                for (i, w) in ws.iter().enumerate() {
                    check(format!("W({i})"), w, expect(i), self.hidden)?;
                }
            }
            EncoderWeights::Sage(layers) => {
                if layers.len() != self.depth {
                    return Err(Error::Config(format!(
                        "encoder has {} layers but depth = {}",
                        layers.len(),
                        self.depth
                    )));
                }
                for (i, l) in layers.iter().enumerate() {
                    check(format!("W_self({i})"), &l.w_self, expect(i), self.hidden)?;
                    check(format!("W_neigh({i})"), &l.w_neigh, expect(i), self.hidden)?;
                }
            }
        }
        check("phi".into(), &self.phi, self.hidden, 1)?;
        check("bias".into(), &self.bias, 1, 1)
    }
}

/// Graph operator an encoder message-passes with: the symmetric normalization
/// for GCN, the row-normalized neighbor-mean matrix for GraphSAGE.
#[derive(Debug, Clone)]
pub enum GraphOp {
    Gcn(Arc<SparseMatrix>),
    Sage(Arc<SparseMatrix>),
}

impl GraphOp {
    /// Builds the operator matching the encoder kind from a raw adjacency.
    pub fn for_encoder(kind: EncoderKind, adjacency: &SparseMatrix, self_loops: bool) -> Result<Self> {
        match kind {
            EncoderKind::Gcn => {
                Ok(GraphOp::Gcn(Arc::new(normalize_adjacency(adjacency, self_loops)?.matrix)))
            }
            EncoderKind::Sage => Ok(GraphOp::Sage(Arc::new(row_mean_matrix(adjacency)?))),
        }
    }
}

/// Tape handles for one bound copy of the parameters.
pub struct BoundParams {
    pub weights: Vec<NodeId>,
}

/// Records every parameter matrix as a trainable leaf, in `matrices` order.
pub fn bind_params(tape: &mut Tape, params: &ModelParams) -> BoundParams {
    let weights = params.matrices().into_iter().map(|m| tape.parameter(m.clone())).collect();
    BoundParams { weights }
}

fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, drop_rate: f64) -> Array2<f64> {
    let keep = 1.0 - drop_rate;
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

/// Runs the encoder on the tape and returns the embedding node (n x hidden).
///
/// GCN layer: relu(A_hat (h W)). SAGE layer: relu(h W_self + (M h) W_neigh)
/// with M the neighbor-mean operator. Dropout masks are drawn from `rng` and
/// applied to each layer's input; pass `None` for evaluation mode.
pub fn encoder_forward(
    tape: &mut Tape,
    params: &ModelParams,
    bound: &BoundParams,
    x: NodeId,
    graph: &GraphOp,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<NodeId> {
    let mut h = x;
    for layer in 0..params.depth {
        if params.dropout > 0.0 {
            if let Some(r) = rng.as_deref_mut() {
                let (rows, cols) = (tape.value(h).nrows(), tape.value(h).ncols());
                let mask = Arc::new(dropout_mask(r, rows, cols, params.dropout));
                h = tape.mask_apply(h, mask)?;
            }
        }
        h = match (&params.encoder, graph) {
            (EncoderWeights::Gcn(_), GraphOp::Gcn(a_hat)) => {
                let hw = tape.matmul(h, bound.weights[layer])?;
                let agg = tape.spmm(a_hat.clone(), hw)?;
                tape.relu(agg)?
            }
            (EncoderWeights::Sage(_), GraphOp::Sage(mean_op)) => {
                let own = tape.matmul(h, bound.weights[2 * layer])?;
                let neigh_mean = tape.spmm(mean_op.clone(), h)?;
                let neigh = tape.matmul(neigh_mean, bound.weights[2 * layer + 1])?;
                let sum = tape.add(own, neigh)?;
                tape.relu(sum)?
            }
            _ => {
                return Err(Error::Contract(
                    "graph operator does not match encoder kind".into(),
                ))
            }
        };
    }
    Ok(h)
}

/// Classifier head on the tape: sigmoid(H phi + bias), an n x 1 node.
pub fn classify(tape: &mut Tape, h: NodeId, phi: NodeId, bias: NodeId) -> Result<NodeId> {
    let logits = tape.matmul(h, phi)?;
    let shifted = tape.add(logits, bias)?;
    tape.sigmoid(shifted)
}

/// Node representations produced by an encoder, n x hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings(pub Array2<f64>);

/// Per-node predicted probabilities, each strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities(Vec<f64>);

impl Probabilities {
    pub fn from_column(m: &Array2<f64>) -> Result<Self> {
        if m.ncols() != 1 {
            return Err(Error::Shape {
                op: "probabilities",
                detail: format!("expected column vector, got {}x{}", m.nrows(), m.ncols()),
            });
        }
        let values: Vec<f64> = m.column(0).to_vec();
        if values.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::Contract("probability outside the open interval (0, 1)".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Deterministic evaluation-mode forward pass: embeddings plus probabilities.
pub fn forward_eval(
    params: &ModelParams,
    features: &Array2<f64>,
    graph: &GraphOp,
) -> Result<(Embeddings, Probabilities)> {
    params.validate_shapes(features.ncols())?;
    let mut tape = Tape::new();
    let bound = bind_params(&mut tape, params);
    let x = tape.constant(features.clone());
    let h = encoder_forward(&mut tape, params, &bound, x, graph, None)?;
    let n_weights = bound.weights.len();
    let p = classify(&mut tape, h, bound.weights[n_weights - 2], bound.weights[n_weights - 1])?;
    let embeddings = Embeddings(tape.value(h).clone());
    let probs = Probabilities::from_column(tape.value(p))?;
    Ok((embeddings, probs))
}

/// Thresholded labels: predicted positive iff p > threshold (strict).
pub fn predict_labels(probs: &Probabilities, threshold: f64) -> Result<Vec<bool>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} must lie in (0, 1)")));
    }
    Ok(probs.values().iter().map(|&p| p > threshold).collect())
}

/// Checkpoint wrapper with a format version; parameter shapes travel with the
/// serialized matrices and the init seed, so a load round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub params: ModelParams,
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let checkpoint = Checkpoint { format_version: 1, params: params.clone() };
    let json = serde_json::to_string_pretty(&checkpoint)?;
    std::fs::write(path, json).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)?;
    Ok(checkpoint.params)
}
