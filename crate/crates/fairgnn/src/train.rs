//! Full-batch training loop: forward, composite loss, reverse sweep, Adam
//! update, per-epoch validation with hybrid-score best-epoch selection.

use crate::error::{Error, Result};
use crate::graph::{Dataset, Splits};
use crate::loss::{composite_loss, FairnessConfig, GroupIndexSets};
use crate::metrics::MetricsReport;
use crate::model::{
    bind_params, classify, encoder_forward, forward_eval, predict_labels, GraphOp, ModelParams,
};
use crate::tape::Tape;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Adam moment hyperparameters. Weight decay is classic L2-into-gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 0.0 }
    }
}

/// First/second moment estimates, aligned with [`ModelParams::matrices`].
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: usize,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Array2<f64>> =
            params.matrices().iter().map(|m| Array2::zeros(m.raw_dim())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One Adam update with bias correction. Gradients must align with
/// [`ModelParams::matrices`]; non-finite gradients abort.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Array2<f64>],
    state: &mut AdamState,
    lr: f64,
    hyper: &AdamHyper,
) -> Result<()> {
    let mut mats = params.matrices_mut();
    if grads.len() != mats.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameter matrices",
            grads.len(),
            mats.len()
        )));
    }
    if grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(Error::Contract("non-finite gradient in optimizer step".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (i, theta) in mats.iter_mut().enumerate() {
        let g = if hyper.weight_decay != 0.0 {
            &grads[i] + &theta.mapv(|w| hyper.weight_decay * w)
        } else {
            grads[i].clone()
        };
        state.m[i] = state.m[i].mapv(|m| hyper.beta1 * m) + &g.mapv(|x| (1.0 - hyper.beta1) * x);
        state.v[i] =
            state.v[i].mapv(|v| hyper.beta2 * v) + &g.mapv(|x| (1.0 - hyper.beta2) * x * x);
        let m_hat = state.m[i].mapv(|m| m / bc1);
        let v_hat = state.v[i].mapv(|v| v / bc2);
        **theta -= &(m_hat / (v_hat.mapv(f64::sqrt) + hyper.epsilon) * lr);
    }
    Ok(())
}

/// Everything one training run needs beyond the dataset and splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub adam: AdamHyper,
    pub seed: u64,
    pub fairness: FairnessConfig,
    pub threshold: f64,
    /// Add self-loops before symmetric normalization (standard GCN practice;
    /// disable for the literal no-self-loop normalization).
    pub self_loops: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-2,
            adam: AdamHyper::default(),
            seed: 0,
            fairness: FairnessConfig::default(),
            threshold: 0.5,
            self_loops: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        self.fairness.validate()
    }
}

/// Loss terms and validation metrics of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total_loss: f64,
    pub pred_loss: f64,
    pub sp_loss: f64,
    pub eo_loss: f64,
    pub val_metrics: MetricsReport,
    pub hybrid_score: f64,
}

/// Per-epoch records and the index of the epoch with the best hybrid score
/// (ties broken by the earliest epoch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    /// One JSON record per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for record in &self.epochs {
            out.push_str(&serde_json::to_string(record)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Parameters restored from the best-scoring epoch of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParams,
}

/// Extracts ground truth for an index set, erroring on any node that lacks it.
fn ground_truth(dataset: &Dataset, idx: &[usize]) -> Result<(Vec<bool>, Vec<bool>)> {
    let mut labels = Vec::with_capacity(idx.len());
    let mut sens = Vec::with_capacity(idx.len());
    for &i in idx {
        labels.push(
            dataset.labels.get(i).copied().flatten().ok_or_else(|| {
                Error::Contract(format!("node {i} has no ground-truth label"))
            })?,
        );
        sens.push(
            dataset.sensitive.get(i).copied().flatten().ok_or_else(|| {
                Error::Contract(format!("node {i} has no ground-truth sensitive attribute"))
            })?,
        );
    }
    Ok((labels, sens))
}

fn evaluate_with(
    params: &ModelParams,
    dataset: &Dataset,
    graph: &GraphOp,
    idx: &[usize],
    threshold: f64,
) -> Result<MetricsReport> {
    if idx.is_empty() {
        return Err(Error::Config("evaluation over an empty index set".into()));
    }
    let (labels, sens) = ground_truth(dataset, idx)?;
    let (_, probs) = forward_eval(params, &dataset.features, graph)?;
    let preds_all = predict_labels(&probs, threshold)?;
    let probs_idx: Vec<f64> = idx.iter().map(|&i| probs.values()[i]).collect();
    let preds_idx: Vec<bool> = idx.iter().map(|&i| preds_all[i]).collect();
    Ok(MetricsReport::compute(&probs_idx, &preds_idx, &labels, &sens))
}

/// Evaluation-mode metrics of a model over an index set. Every node in `idx`
/// must carry ground-truth label and sensitive attribute.
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    idx: &[usize],
    threshold: f64,
    self_loops: bool,
) -> Result<MetricsReport> {
    let graph = GraphOp::for_encoder(params.encoder_kind(), &dataset.adjacency, self_loops)?;
    evaluate_with(params, dataset, &graph, idx, threshold)
}

/// Runs the full training loop and returns the best-epoch snapshot plus the
/// complete history. Deterministic given the config seed.
///
/// Each epoch: record the forward pass and the composite loss on a fresh
/// tape, reverse-sweep, Adam-update, then score the validation split with
/// dropout disabled.
pub fn train(
    dataset: &Dataset,
    splits: &Splits,
    init: ModelParams,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainHistory)> {
    config.validate()?;
    init.validate_shapes(dataset.feature_dim())?;
    if splits.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let groups = GroupIndexSets::from_labels(&dataset.labels, &dataset.sensitive, &splits.train)?;
    let graph = GraphOp::for_encoder(init.encoder_kind(), &dataset.adjacency, config.self_loops)?;

    let mut params = init;
    let mut adam = AdamState::new(&params);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best_epoch = 0usize;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_params = params.clone();

    for epoch in 0..config.epochs {
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, &params);
        let x = tape.constant(dataset.features.clone());
        let h = encoder_forward(&mut tape, &params, &bound, x, &graph, Some(&mut dropout_rng))?;
        let n_weights = bound.weights.len();
        let p = classify(&mut tape, h, bound.weights[n_weights - 2], bound.weights[n_weights - 1])?;
        let (total, breakdown) = composite_loss(
            &mut tape,
            p,
            &dataset.labels,
            &splits.train,
            &groups,
            &config.fairness,
        )?;
        if !breakdown.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("total loss is {}", breakdown.total),
            });
        }

        let gradients = tape.backward(total)?;
        let grads: Vec<Array2<f64>> = bound
            .weights
            .iter()
            .map(|&id| gradients.get(id).expect("bound parameter is a trainable leaf").clone())
            .collect();
        adam_step(&mut params, &grads, &mut adam, config.lr, &config.adam)
            .map_err(|e| Error::Diverged { epoch, detail: e.to_string() })?;

        let val_metrics = evaluate_with(&params, dataset, &graph, &splits.val, config.threshold)?;
        let score = val_metrics.hybrid();
        if score > best_score {
            best_score = score;
            best_epoch = epoch;
            best_params = params.clone();
        }
        history.push(EpochRecord {
            epoch,
            total_loss: breakdown.total,
            pred_loss: breakdown.pred,
            sp_loss: breakdown.sp,
            eo_loss: breakdown.eo,
            val_metrics,
            hybrid_score: score,
        });
    }

    Ok((TrainedModel { params: best_params }, TrainHistory { epochs: history, best_epoch }))
}
