//! Training objective: cross-entropy over labeled nodes plus differentiable
//! statistical-parity and equal-opportunity surrogates.
//!
//! The surrogates replace thresholded predictions with mean predicted
//! probabilities per sensitive group, so both terms are tape-differentiable:
//!
//! * SP surrogate: |mean_{i in D1} p_i - mean_{j in D0} p_j| over the labeled
//!   set split by sensitive attribute.
//! * EO surrogate: the same gap restricted to positively labeled nodes.
//!
//! Both terms are computed over the labeled training set each epoch.

use crate::error::{Error, Result};
use crate::tape::{NodeId, Tape};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// What a fairness term contributes when one of its groups is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmptyGroupPolicy {
    /// Contribute zero and log a warning; training proceeds.
    #[default]
    Zero,
    /// Abort with a configuration error.
    Error,
}

/// Weights of the fairness composite: alpha scales the equal-opportunity
/// term, beta the statistical-parity term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub empty_group_policy: EmptyGroupPolicy,
}

impl FairnessConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let cfg = Self { alpha, beta, empty_group_policy: EmptyGroupPolicy::Zero };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("beta {} must be finite and >= 0", self.beta)));
        }
        Ok(())
    }
}

impl Default for FairnessConfig {
    fn default() -> Self {
        Self { alpha: 0.0, beta: 0.0, empty_group_policy: EmptyGroupPolicy::Zero }
    }
}

/// Labeled-set index groups the fairness terms average over: D1/D0 split by
/// sensitive attribute, P1/P0 the positively labeled subsets of each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndexSets {
    pub d1: Vec<usize>,
    pub d0: Vec<usize>,
    pub p1: Vec<usize>,
    pub p0: Vec<usize>,
}

impl GroupIndexSets {
    /// Builds the groups from per-node labels/attributes over `idx`. Every
    /// index must carry both a label and a sensitive attribute.
    pub fn from_labels(
        labels: &[Option<bool>],
        sensitive: &[Option<bool>],
        idx: &[usize],
    ) -> Result<Self> {
        let mut groups =
            GroupIndexSets { d1: Vec::new(), d0: Vec::new(), p1: Vec::new(), p0: Vec::new() };
        for &i in idx {
            let y = labels
                .get(i)
                .copied()
                .flatten()
                .ok_or_else(|| Error::Contract(format!("node {i} has no target label")))?;
            let s = sensitive
                .get(i)
                .copied()
                .flatten()
                .ok_or_else(|| Error::Contract(format!("node {i} has no sensitive attribute")))?;
            if s {
                groups.d1.push(i);
                if y {
                    groups.p1.push(i);
                }
            } else {
                groups.d0.push(i);
                if y {
                    groups.p0.push(i);
                }
            }
        }
        Ok(groups)
    }
}

/// Cross-entropy over the labeled index set:
/// -(1/|L|) sum [y log p + (1-y) log(1-p)], with p clamped inside the log.
pub fn pred_loss(
    tape: &mut Tape,
    p: NodeId,
    labels: &[Option<bool>],
    idx: &[usize],
) -> Result<NodeId> {
    if idx.is_empty() {
        return Err(Error::Config("cross-entropy over an empty labeled set".into()));
    }
    let n = tape.value(p).nrows();
    let mut pos_mask = Array2::zeros((n, 1));
    let mut neg_mask = Array2::zeros((n, 1));
    for &i in idx {
        match labels.get(i).copied().flatten() {
            Some(true) => pos_mask[(i, 0)] = 1.0,
            Some(false) => neg_mask[(i, 0)] = 1.0,
            None => return Err(Error::Contract(format!("node {i} has no target label"))),
        }
    }
    let ones = tape.constant(Array2::from_elem((n, 1), 1.0));
    let nll_pos = tape.neg_log(p)?;
    let complement = tape.sub(ones, p)?;
    let nll_neg = tape.neg_log(complement)?;
    let pos_term = tape.mask_apply(nll_pos, Arc::new(pos_mask))?;
    let neg_term = tape.mask_apply(nll_neg, Arc::new(neg_mask))?;
    let per_node = tape.add(pos_term, neg_term)?;
    tape.mean_over_index_set(per_node, Arc::new(idx.to_vec()))
}

fn group_mean_gap(
    tape: &mut Tape,
    p: NodeId,
    group1: &[usize],
    group0: &[usize],
    policy: EmptyGroupPolicy,
    term: &'static str,
) -> Result<NodeId> {
    if group1.is_empty() || group0.is_empty() {
        return match policy {
            EmptyGroupPolicy::Zero => {
                log::warn!("{term}: a sensitive group is empty; contributing zero");
                Ok(tape.scalar_constant(0.0))
            }
            EmptyGroupPolicy::Error => {
                Err(Error::Config(format!("{term}: a sensitive group is empty")))
            }
        };
    }
    let mean1 = tape.mean_over_index_set(p, Arc::new(group1.to_vec()))?;
    let mean0 = tape.mean_over_index_set(p, Arc::new(group0.to_vec()))?;
    let gap = tape.sub(mean1, mean0)?;
    tape.abs(gap)
}

/// Differentiable statistical-parity surrogate:
/// |mean_{i in D1} p_i - mean_{j in D0} p_j|.
pub fn sp_loss(
    tape: &mut Tape,
    p: NodeId,
    groups: &GroupIndexSets,
    policy: EmptyGroupPolicy,
) -> Result<NodeId> {
    group_mean_gap(tape, p, &groups.d1, &groups.d0, policy, "sp-loss")
}

/// Differentiable equal-opportunity surrogate:
/// |mean_{i in P1} p_i - mean_{j in P0} p_j|.
pub fn eo_loss(
    tape: &mut Tape,
    p: NodeId,
    groups: &GroupIndexSets,
    policy: EmptyGroupPolicy,
) -> Result<NodeId> {
    group_mean_gap(tape, p, &groups.p1, &groups.p0, policy, "eo-loss")
}

/// Weighted fairness composite: alpha * EO + beta * SP.
pub fn fairness_loss(
    tape: &mut Tape,
    p: NodeId,
    groups: &GroupIndexSets,
    cfg: &FairnessConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    let eo = eo_loss(tape, p, groups, cfg.empty_group_policy)?;
    let sp = sp_loss(tape, p, groups, cfg.empty_group_policy)?;
    let weighted_eo = tape.scale(eo, cfg.alpha)?;
    let weighted_sp = tape.scale(sp, cfg.beta)?;
    tape.add(weighted_eo, weighted_sp)
}

/// Total objective: any scalar base loss plus the fairness composite. The
/// base may be the cross-entropy of this crate's models or the native loss
/// of an external model hooked onto the same tape.
pub fn total_loss(
    tape: &mut Tape,
    base: NodeId,
    p: NodeId,
    groups: &GroupIndexSets,
    cfg: &FairnessConfig,
) -> Result<NodeId> {
    let fairness = fairness_loss(tape, p, groups, cfg)?;
    tape.add(base, fairness)
}

/// Per-term loss values extracted from one composite construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub pred: f64,
    pub sp: f64,
    pub eo: f64,
}

/// Builds pred + alpha*EO + beta*SP on the tape and reports each term's value
/// alongside the total-loss node.
pub fn composite_loss(
    tape: &mut Tape,
    p: NodeId,
    labels: &[Option<bool>],
    idx: &[usize],
    groups: &GroupIndexSets,
    cfg: &FairnessConfig,
) -> Result<(NodeId, LossBreakdown)> {
    cfg.validate()?;
    let pred = pred_loss(tape, p, labels, idx)?;
    let eo = eo_loss(tape, p, groups, cfg.empty_group_policy)?;
    let sp = sp_loss(tape, p, groups, cfg.empty_group_policy)?;
    let weighted_eo = tape.scale(eo, cfg.alpha)?;
    let weighted_sp = tape.scale(sp, cfg.beta)?;
    let fairness = tape.add(weighted_eo, weighted_sp)?;
    let total = tape.add(pred, fairness)?;
    let breakdown = LossBreakdown {
        total: tape.scalar_value(total)?,
        pred: tape.scalar_value(pred)?,
        sp: tape.scalar_value(sp)?,
        eo: tape.scalar_value(eo)?,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap()
    }

    fn probs_node(tape: &mut Tape, values: &[f64]) -> NodeId {
        tape.constant(column(values))
    }

    #[test]
    fn pred_loss_of_maximal_entropy_is_ln_two() {
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.5, 0.5]);
        let labels = vec![Some(true), Some(false)];
        let loss = pred_loss(&mut tape, p, &labels, &[0, 1]).unwrap();
        assert!((tape.scalar_value(loss).unwrap() - 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pred_loss_near_perfect_prediction_is_near_zero() {
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[1.0 - 1e-7]);
        let loss = pred_loss(&mut tape, p, &[Some(true)], &[0]).unwrap();
        assert!(tape.scalar_value(loss).unwrap() < 2e-7);
    }

    #[test]
    fn pred_loss_hand_computed_example() {
        // -(ln 0.9 + ln 0.8) / 2
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.9, 0.2]);
        let labels = vec![Some(true), Some(false)];
        let loss = pred_loss(&mut tape, p, &labels, &[0, 1]).unwrap();
        let expected = -(0.9_f64.ln() + 0.8_f64.ln()) / 2.0;
        assert!((tape.scalar_value(loss).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.1643).abs() < 1e-4);
    }

    #[test]
    fn pred_loss_rejects_empty_labeled_set() {
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.5]);
        assert!(matches!(pred_loss(&mut tape, p, &[Some(true)], &[]), Err(Error::Config(_))));
    }

    fn groups_for(labels: &[Option<bool>], sens: &[Option<bool>]) -> GroupIndexSets {
        let idx: Vec<usize> = (0..labels.len()).collect();
        GroupIndexSets::from_labels(labels, sens, &idx).unwrap()
    }

    #[test]
    fn sp_loss_hand_computed_example() {
        // s = [1, 0, 1]: |mean(0.9, 0.7) - 0.2| = 0.6
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.9, 0.2, 0.7]);
        let groups = groups_for(
            &[Some(true), Some(true), Some(true)],
            &[Some(true), Some(false), Some(true)],
        );
        let loss = sp_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).unwrap();
        assert!((tape.scalar_value(loss).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn sp_loss_is_zero_when_group_means_match() {
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.3, 0.3, 0.3, 0.3]);
        let groups = groups_for(
            &[Some(true); 4],
            &[Some(true), Some(false), Some(true), Some(false)],
        );
        let loss = sp_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).unwrap();
        assert_eq!(tape.scalar_value(loss).unwrap(), 0.0);
    }

    #[test]
    fn sp_loss_empty_group_policies() {
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.9, 0.2]);
        let groups = groups_for(&[Some(true), Some(true)], &[Some(true), Some(true)]);
        assert!(groups.d0.is_empty());
        let zero = sp_loss(&mut tape, p, &groups, EmptyGroupPolicy::Zero).unwrap();
        assert_eq!(tape.scalar_value(zero).unwrap(), 0.0);
        assert!(sp_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).is_err());
    }

    #[test]
    fn eo_loss_hand_computed_example() {
        // (y, s) = [(1,1), (1,0)]: |0.8 - 0.6| = 0.2
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.8, 0.6]);
        let groups = groups_for(&[Some(true), Some(true)], &[Some(true), Some(false)]);
        let loss = eo_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).unwrap();
        assert!((tape.scalar_value(loss).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn eo_loss_zero_when_positives_predicted_identically() {
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.8, 0.8, 0.1, 0.2]);
        let groups = groups_for(
            &[Some(true), Some(true), Some(false), Some(false)],
            &[Some(true), Some(false), Some(true), Some(false)],
        );
        let loss = eo_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).unwrap();
        assert_eq!(tape.scalar_value(loss).unwrap(), 0.0);
    }

    #[test]
    fn eo_loss_empty_positive_group_policy_zero() {
        // group s=0 has no positive labels
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.8, 0.6]);
        let groups = groups_for(&[Some(true), Some(false)], &[Some(true), Some(false)]);
        assert!(groups.p0.is_empty());
        let loss = eo_loss(&mut tape, p, &groups, EmptyGroupPolicy::Zero).unwrap();
        assert_eq!(tape.scalar_value(loss).unwrap(), 0.0);
    }

    #[test]
    fn fairness_loss_examples() {
        let labels = [Some(true), Some(true), Some(false), Some(true)];
        let sens = [Some(true), Some(false), Some(true), Some(false)];
        let groups = groups_for(&labels, &sens);
        let p_values = [0.9, 0.7, 0.5, 0.5];

        // alpha = beta = 0 disables the regularizer entirely
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &p_values);
        let cfg = FairnessConfig::new(0.0, 0.0).unwrap();
        let loss = fairness_loss(&mut tape, p, &groups, &cfg).unwrap();
        assert_eq!(tape.scalar_value(loss).unwrap(), 0.0);

        // single-term: alpha = 1, beta = 0 reproduces the EO value
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &p_values);
        let cfg = FairnessConfig::new(1.0, 0.0).unwrap();
        let composite = fairness_loss(&mut tape, p, &groups, &cfg).unwrap();
        let eo_only = eo_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).unwrap();
        assert_eq!(
            tape.scalar_value(composite).unwrap(),
            tape.scalar_value(eo_only).unwrap()
        );
    }

    #[test]
    fn fairness_loss_weighted_sum_example() {
        // eo = 0.2, sp = 0.6, alpha = 0.5, beta = 2 -> 0.5*0.2 + 2*0.6 = 1.3
        let labels = [Some(true), Some(true), Some(false), Some(false), Some(false), Some(false)];
        let sens = [Some(true), Some(false), Some(true), Some(false), Some(false), Some(false)];
        let groups = groups_for(&labels, &sens);
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.8, 0.6, 0.8, 0.1, 0.05, 0.05]);
        let sp = sp_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).unwrap();
        let eo = eo_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).unwrap();
        assert!((tape.scalar_value(sp).unwrap() - 0.6).abs() < 1e-12);
        assert!((tape.scalar_value(eo).unwrap() - 0.2).abs() < 1e-12);
        let cfg = FairnessConfig::new(0.5, 2.0).unwrap();
        let loss = fairness_loss(&mut tape, p, &groups, &cfg).unwrap();
        assert!((tape.scalar_value(loss).unwrap() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn total_loss_reduces_to_base_when_disabled() {
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.9, 0.2]);
        let labels = vec![Some(true), Some(false)];
        let groups = groups_for(&labels, &[Some(true), Some(false)]);
        let base = pred_loss(&mut tape, p, &labels, &[0, 1]).unwrap();
        let cfg = FairnessConfig::new(0.0, 0.0).unwrap();
        let total = total_loss(&mut tape, base, p, &groups, &cfg).unwrap();
        assert_eq!(
            tape.scalar_value(total).unwrap(),
            tape.scalar_value(base).unwrap()
        );
    }

    #[test]
    fn total_loss_sums_base_and_fairness() {
        let mut tape = Tape::new();
        let p = probs_node(&mut tape, &[0.9, 0.2]);
        let labels = vec![Some(true), Some(false)];
        let groups = groups_for(&labels, &[Some(true), Some(false)]);
        let base = pred_loss(&mut tape, p, &labels, &[0, 1]).unwrap();
        let cfg = FairnessConfig::new(0.5, 2.0).unwrap();
        let fair = fairness_loss(&mut tape, p, &groups, &cfg).unwrap();
        let total = total_loss(&mut tape, base, p, &groups, &cfg).unwrap();
        let expected = tape.scalar_value(base).unwrap() + tape.scalar_value(fair).unwrap();
        assert!((tape.scalar_value(total).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn losses_ignore_unlabeled_probabilities() {
        // changing probabilities outside the labeled set moves nothing
        let labels = vec![Some(true), Some(false), None, None];
        let sens = vec![Some(true), Some(false), None, None];
        let idx = [0usize, 1];
        let groups = GroupIndexSets::from_labels(&labels, &sens, &idx).unwrap();
        let eval = |unlabeled_p: f64| -> (f64, f64, f64) {
            let mut tape = Tape::new();
            let p = tape.constant(column(&[0.9, 0.2, unlabeled_p, 1.0 - unlabeled_p]));
            let (_, breakdown) = composite_loss(
                &mut tape,
                p,
                &labels,
                &idx,
                &groups,
                &FairnessConfig::new(1.0, 1.0).unwrap(),
            )
            .unwrap();
            (breakdown.total, breakdown.sp, breakdown.eo)
        };
        assert_eq!(eval(0.01), eval(0.99));
    }

    #[test]
    fn gradient_of_total_equals_sum_of_component_gradients() {
        use crate::gradcheck::{finite_difference, max_relative_error};
        // logits parametrize probabilities through sigmoid; FD certifies the
        // composite gradient equals the sum of per-term gradients
        let labels = vec![Some(true), Some(true), Some(false), Some(true)];
        let sens = vec![Some(true), Some(false), Some(false), Some(true)];
        let idx: Vec<usize> = (0..4).collect();
        let groups = GroupIndexSets::from_labels(&labels, &sens, &idx).unwrap();
        let logits = column(&[0.3, -0.2, 0.8, -0.5]);

        let loss_with = |alpha: f64, beta: f64| {
            let labels = labels.clone();
            let idx = idx.clone();
            let groups = groups.clone();
            move |mats: &[Array2<f64>]| -> crate::error::Result<f64> {
                let mut tape = Tape::new();
                let z = tape.parameter(mats[0].clone());
                let p = tape.sigmoid(z)?;
                let cfg = FairnessConfig::new(alpha, beta)?;
                let (total, _) = composite_loss(&mut tape, p, &labels, &idx, &groups, &cfg)?;
                tape.scalar_value(total)
            }
        };

        let grad_of = |alpha: f64, beta: f64| {
            finite_difference(loss_with(alpha, beta), &[logits.clone()], 1e-6).unwrap()
        };
        let g_total = grad_of(1.0, 1.0);
        let g_pred = grad_of(0.0, 0.0);
        let g_eo = grad_of(1.0, 0.0);
        let g_sp = grad_of(0.0, 1.0);
        // g_total = g_pred + (g_eo - g_pred) + (g_sp - g_pred)
        let combined = vec![&g_eo[0] + &g_sp[0] - &g_pred[0]];
        assert!(max_relative_error(&g_total, &combined, 1e-6) < 1e-6);
    }

    proptest::proptest! {
        // surrogate gaps always live in [0, 1] and are permutation invariant
        #[test]
        fn surrogate_bounds_and_permutation_invariance(
            raw in proptest::collection::vec((0.001f64..0.999, proptest::bool::ANY, proptest::bool::ANY), 4..40)
        ) {
            let labels: Vec<Option<bool>> = raw.iter().map(|r| Some(r.1)).collect();
            let sens: Vec<Option<bool>> = raw.iter().map(|r| Some(r.2)).collect();
            let probs: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let idx: Vec<usize> = (0..raw.len()).collect();
            let groups = GroupIndexSets::from_labels(&labels, &sens, &idx).unwrap();

            let mut tape = Tape::new();
            let p = tape.constant(column(&probs));
            let sp = sp_loss(&mut tape, p, &groups, EmptyGroupPolicy::Zero).unwrap();
            let eo = eo_loss(&mut tape, p, &groups, EmptyGroupPolicy::Zero).unwrap();
            let sp_value = tape.scalar_value(sp).unwrap();
            let eo_value = tape.scalar_value(eo).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&sp_value));
            proptest::prop_assert!((0.0..=1.0).contains(&eo_value));

            // reverse node order: group membership travels with each node
            let rev: Vec<usize> = (0..raw.len()).rev().collect();
            let labels_r: Vec<Option<bool>> = rev.iter().map(|&i| labels[i]).collect();
            let sens_r: Vec<Option<bool>> = rev.iter().map(|&i| sens[i]).collect();
            let probs_r: Vec<f64> = rev.iter().map(|&i| probs[i]).collect();
            let groups_r = GroupIndexSets::from_labels(&labels_r, &sens_r, &idx).unwrap();
            let mut tape_r = Tape::new();
            let p_r = tape_r.constant(column(&probs_r));
            let sp_r = sp_loss(&mut tape_r, p_r, &groups_r, EmptyGroupPolicy::Zero).unwrap();
            let eo_r = eo_loss(&mut tape_r, p_r, &groups_r, EmptyGroupPolicy::Zero).unwrap();
            proptest::prop_assert!((tape_r.scalar_value(sp_r).unwrap() - sp_value).abs() < 1e-12);
            proptest::prop_assert!((tape_r.scalar_value(eo_r).unwrap() - eo_value).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_surrogates_converge_to_discrete_metrics() {
        use crate::metrics;
        use rand::Rng;
        use rand::SeedableRng;
        // with probabilities pinned to {eps, 1-eps} the surrogate is within
        // 2 eps of the thresholded metric
        let eps = 1e-3;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(6..40);
            let mut labels = Vec::new();
            let mut sens = Vec::new();
            let mut probs = Vec::new();
            for _ in 0..n {
                labels.push(Some(rng.random::<bool>()));
                sens.push(Some(rng.random::<bool>()));
                probs.push(if rng.random::<bool>() { 1.0 - eps } else { eps });
            }
            let idx: Vec<usize> = (0..n).collect();
            let groups = GroupIndexSets::from_labels(&labels, &sens, &idx).unwrap();
            if groups.p1.is_empty() || groups.p0.is_empty() {
                continue;
            }
            let preds: Vec<bool> = probs.iter().map(|&p| p > 0.5).collect();
            let flat_labels: Vec<bool> = labels.iter().map(|l| l.unwrap()).collect();
            let flat_sens: Vec<bool> = sens.iter().map(|s| s.unwrap()).collect();

            let mut tape = Tape::new();
            let p = tape.constant(column(&probs));
            let sp = sp_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).unwrap();
            let eo = eo_loss(&mut tape, p, &groups, EmptyGroupPolicy::Error).unwrap();

            let delta_sp = metrics::delta_sp(&preds, &flat_sens).unwrap();
            let delta_eo = metrics::delta_eo(&preds, &flat_labels, &flat_sens).unwrap();
            // the bound is achieved exactly when one group is all-positive
            // and the other all-negative; 1e-12 absorbs float rounding there
            assert!((tape.scalar_value(sp).unwrap() - delta_sp / 100.0).abs() <= 2.0 * eps + 1e-12);
            assert!((tape.scalar_value(eo).unwrap() - delta_eo / 100.0).abs() <= 2.0 * eps + 1e-12);
        }
    }
}
