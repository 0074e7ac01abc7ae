//! Discrete evaluation metrics and the hybrid model-selection score.
//!
//! All metrics are reported as percentages. Metrics whose defining population
//! is empty (a sensitive group, a class) are reported as undefined (`None`)
//! rather than zero, so aggregation over seeds can skip them.

use serde::{Deserialize, Serialize};

/// Statistical parity gap: 100 * |rate(pred=1 | s=1) - rate(pred=1 | s=0)|.
/// Undefined when either sensitive group is empty.
pub fn delta_sp(preds: &[bool], sensitive: &[bool]) -> Option<f64> {
    debug_assert_eq!(preds.len(), sensitive.len());
    let (mut pos1, mut n1, mut pos0, mut n0) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &s) in preds.iter().zip(sensitive) {
        if s {
            n1 += 1;
            pos1 += p as usize;
        } else {
            n0 += 1;
            pos0 += p as usize;
        }
    }
    if n1 == 0 || n0 == 0 {
        return None;
    }
    Some(100.0 * (pos1 as f64 / n1 as f64 - pos0 as f64 / n0 as f64).abs())
}

/// Equal opportunity gap: 100 * |TPR(s=1) - TPR(s=0)|. Undefined when either
/// group has no positively labeled member.
pub fn delta_eo(preds: &[bool], labels: &[bool], sensitive: &[bool]) -> Option<f64> {
    debug_assert_eq!(preds.len(), labels.len());
    debug_assert_eq!(preds.len(), sensitive.len());
    let (mut tp1, mut pos1, mut tp0, mut pos0) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..preds.len() {
        if labels[i] {
            if sensitive[i] {
                pos1 += 1;
                tp1 += preds[i] as usize;
            } else {
                pos0 += 1;
                tp0 += preds[i] as usize;
            }
        }
    }
    if pos1 == 0 || pos0 == 0 {
        return None;
    }
    Some(100.0 * (tp1 as f64 / pos1 as f64 - tp0 as f64 / pos0 as f64).abs())
}

/// Balanced accuracy: 100 * (TPR + TNR) / 2. Undefined when the ground truth
/// contains a single class.
pub fn bacc(preds: &[bool], labels: &[bool]) -> Option<f64> {
    debug_assert_eq!(preds.len(), labels.len());
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in preds.iter().zip(labels) {
        if y {
            pos += 1;
            tp += p as usize;
        } else {
            neg += 1;
            tn += (!p) as usize;
        }
    }
    if pos == 0 || neg == 0 {
        return None;
    }
    Some(100.0 * (tp as f64 / pos as f64 + tn as f64 / neg as f64) / 2.0)
}

/// Area under the ROC curve via the Mann-Whitney statistic: the probability
/// that a random positive outranks a random negative, ties counted one half.
/// Computed from average ranks. Undefined for single-class ground truth.
pub fn auc(probs: &[f64], labels: &[bool]) -> Option<f64> {
    debug_assert_eq!(probs.len(), labels.len());
    let n = probs.len();
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).expect("finite probabilities"));

    // average ranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        let avg_rank = ((i + 1 + j + 1) as f64) / 2.0;
        for &node in &order[i..=j] {
            if labels[node] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(100.0 * u / (n_pos as f64 * n_neg as f64))
}

/// F1 score: 100 * 2TP / (2TP + FP + FN), zero when the denominator is zero.
pub fn f1(preds: &[bool], labels: &[bool]) -> f64 {
    debug_assert_eq!(preds.len(), labels.len());
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &y) in preds.iter().zip(labels) {
        match (p, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        100.0 * 2.0 * tp as f64 / denom as f64
    }
}

/// Model-selection score: BACC + [(100 - dEO) + (100 - dSP)] / 2.
/// All inputs are percentages in [0, 100].
pub fn hybrid_score(bacc: f64, delta_eo: f64, delta_sp: f64) -> f64 {
    debug_assert!((0.0..=100.0).contains(&bacc));
    debug_assert!((0.0..=100.0).contains(&delta_eo));
    debug_assert!((0.0..=100.0).contains(&delta_sp));
    bacc + ((100.0 - delta_eo) + (100.0 - delta_sp)) / 2.0
}

/// Full per-split evaluation: classification and fairness percentages plus
/// the count of every (y, s, pred) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bacc: Option<f64>,
    pub auc: Option<f64>,
    pub f1: f64,
    pub delta_sp: Option<f64>,
    pub delta_eo: Option<f64>,
    /// Counts indexed by [y][s][pred], each in {0, 1}.
    pub cells: [[[usize; 2]; 2]; 2],
}

impl MetricsReport {
    pub fn compute(probs: &[f64], preds: &[bool], labels: &[bool], sensitive: &[bool]) -> Self {
        let mut cells = [[[0usize; 2]; 2]; 2];
        for i in 0..preds.len() {
            cells[labels[i] as usize][sensitive[i] as usize][preds[i] as usize] += 1;
        }
        MetricsReport {
            bacc: bacc(preds, labels),
            auc: auc(probs, labels),
            f1: f1(preds, labels),
            delta_sp: delta_sp(preds, sensitive),
            delta_eo: delta_eo(preds, labels, sensitive),
            cells,
        }
    }

    /// Number of evaluated nodes (sum of all cells).
    pub fn evaluated(&self) -> usize {
        self.cells.iter().flatten().flatten().sum()
    }

    /// Hybrid score with documented fallbacks for degenerate splits: an
    /// undefined BACC counts as chance (50), an undefined gap as zero. Both
    /// cases are constant across epochs of one run, so best-epoch selection
    /// is unaffected.
    pub fn hybrid(&self) -> f64 {
        hybrid_score(
            self.bacc.unwrap_or(50.0),
            self.delta_eo.unwrap_or(0.0),
            self.delta_sp.unwrap_or(0.0),
        )
    }

    /// Column order of the paper's tables.
    pub fn csv_header() -> &'static str {
        "bacc,auc,f1,delta_sp,delta_eo"
    }

    pub fn csv_row(&self) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| x.to_string());
        format!(
            "{},{},{},{},{}",
            cell(self.bacc),
            cell(self.auc),
            self.f1,
            cell(self.delta_sp),
            cell(self.delta_eo)
        )
    }
}
