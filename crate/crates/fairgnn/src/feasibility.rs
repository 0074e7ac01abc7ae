//! Executable form of the equal-opportunity + statistical-parity
//! compatibility analysis on normalized per-group confusion matrices.
//!
//! Group a and group b have negative proportions x and y (base rates 1-x and
//! 1-y). Imposing equal TPRs and equal positive-prediction rates leaves
//! (TP_b, FP_b) free and determines everything else in closed form:
//!
//!   TP_a = (1-x)/(1-y) * TP_b        FP_a = (x-y)/(1-y) * TP_b + FP_b
//!   FN_g = (1 - rate_g) - TP_g       TN_g = rate_g - FP_g
//!
//! Inside the bounding box 0 <= TP_b <= 1-y, 0 <= FP_b <= y the whole system
//! is feasible exactly when the two derived entries stay non-negative:
//!
//!   (y-x) * TP_b <= (1-y) * FP_b     (FP_a >= 0)
//!   FP_b + (x-y)/(1-y) * TP_b <= x   (TN_a >= 0)
//!
//! The first line is the cross-multiplied form of (y-x)/(1-y) <= FP_b/TP_b,
//! which also settles TP_b = 0 without dividing by zero.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Normalized confusion matrix of one group; the four entries sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub true_pos: f64,
    pub false_pos: f64,
    pub true_neg: f64,
    pub false_neg: f64,
}

impl GroupConfusion {
    pub fn entries(&self) -> [f64; 4] {
        [self.true_pos, self.false_pos, self.true_neg, self.false_neg]
    }

    pub fn sum(&self) -> f64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    /// True positive rate, undefined when the group has no positive mass.
    pub fn tpr(&self) -> Option<f64> {
        let positives = self.true_pos + self.false_neg;
        if positives > 0.0 {
            Some(self.true_pos / positives)
        } else {
            None
        }
    }

    /// Positive-prediction rate (the matrix is normalized to total mass 1).
    pub fn positive_rate(&self) -> f64 {
        self.true_pos + self.false_pos
    }
}

/// Negative proportions (x, y) of groups a and b; base rates are 1-x, 1-y.
/// The analysis works on the open square, so boundary values are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseRates {
    x: f64,
    y: f64,
}

impl BaseRates {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain(format!("x = {x} must lie strictly inside (0, 1)")));
        }
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::Domain(format!("y = {y} must lie strictly inside (0, 1)")));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

fn check_box(rates: &BaseRates, tp_b: f64, fp_b: f64) -> Result<()> {
    if !(0.0..=1.0 - rates.y).contains(&tp_b) || !tp_b.is_finite() {
        return Err(Error::Domain(format!(
            "tp_b = {tp_b} outside [0, {}]",
            1.0 - rates.y
        )));
    }
    if !(0.0..=rates.y).contains(&fp_b) || !fp_b.is_finite() {
        return Err(Error::Domain(format!("fp_b = {fp_b} outside [0, {}]", rates.y)));
    }
    Ok(())
}

/// Whether free variables (tp_b, fp_b) admit confusion matrices satisfying
/// equal opportunity and statistical parity simultaneously.
pub fn check_feasible(rates: &BaseRates, tp_b: f64, fp_b: f64) -> Result<bool> {
    check_box(rates, tp_b, fp_b)?;
    let ratio_ok = (rates.y - rates.x) * tp_b <= (1.0 - rates.y) * fp_b;
    let budget_ok = fp_b + (rates.x - rates.y) / (1.0 - rates.y) * tp_b <= rates.x;
    Ok(ratio_ok && budget_ok)
}

/// Completes both confusion matrices from the free variables. Fails with a
/// constraint error when the point is infeasible (an entry would go negative).
pub fn complete_matrices(
    rates: &BaseRates,
    tp_b: f64,
    fp_b: f64,
) -> Result<(GroupConfusion, GroupConfusion)> {
    if !check_feasible(rates, tp_b, fp_b)? {
        return Err(Error::Constraint(format!(
            "(tp_b, fp_b) = ({tp_b}, {fp_b}) is infeasible for (x, y) = ({}, {})",
            rates.x, rates.y
        )));
    }
    let (x, y) = (rates.x, rates.y);
    let tp_a = (1.0 - x) / (1.0 - y) * tp_b;
    let fp_a = (x - y) / (1.0 - y) * tp_b + fp_b;
    let a = GroupConfusion {
        true_pos: tp_a,
        false_pos: fp_a,
        true_neg: x - fp_a,
        false_neg: 1.0 - x - tp_a,
    };
    let b = GroupConfusion {
        true_pos: tp_b,
        false_pos: fp_b,
        true_neg: y - fp_b,
        false_neg: 1.0 - y - tp_b,
    };
    Ok((a, b))
}

/// Fairness gaps of a completed pair: equal-opportunity gap |TPR_a - TPR_b|
/// (undefined when a group has zero positive mass) and statistical-parity gap
/// |positive_rate_a - positive_rate_b|.
pub fn verify_fairness_of_completion(
    a: &GroupConfusion,
    b: &GroupConfusion,
) -> (Option<f64>, f64) {
    let eo_gap = match (a.tpr(), b.tpr()) {
        (Some(ta), Some(tb)) => Some((ta - tb).abs()),
        _ => None,
    };
    let sp_gap = (a.positive_rate() - b.positive_rate()).abs();
    (eo_gap, sp_gap)
}

/// Fraction of the (tp_b, fp_b) bounding box [0, 1-y] x [0, y] that is
/// feasible, estimated at cell centers of a resolution x resolution grid.
/// Rows are evaluated in parallel; the integer reduction is order-free.
pub fn region_measure(rates: &BaseRates, resolution: usize) -> Result<f64> {
    if resolution < 10 {
        return Err(Error::Config(format!("resolution {resolution} must be at least 10")));
    }
    let counts: usize = {
        use rayon::prelude::*;
        (0..resolution)
            .into_par_iter()
            .map(|i| {
                let tp_b = (i as f64 + 0.5) / resolution as f64 * (1.0 - rates.y);
                (0..resolution)
                    .filter(|&j| {
                        let fp_b = (j as f64 + 0.5) / resolution as f64 * rates.y;
                        check_feasible(rates, tp_b, fp_b).unwrap_or(false)
                    })
                    .count()
            })
            .sum()
    };
    Ok(counts as f64 / (resolution * resolution) as f64)
}

/// One grid cell of a feasibility-region scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionCell {
    pub tp_b: f64,
    pub fp_b: f64,
    pub feasible: bool,
}

/// Dense cell-center scan of the bounding box, row-major, for CSV export.
pub fn region_scan(rates: &BaseRates, resolution: usize) -> Result<Vec<RegionCell>> {
    if resolution < 10 {
        return Err(Error::Config(format!("resolution {resolution} must be at least 10")));
    }
    let mut cells = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let tp_b = (i as f64 + 0.5) / resolution as f64 * (1.0 - rates.y);
        for j in 0..resolution {
            let fp_b = (j as f64 + 0.5) / resolution as f64 * rates.y;
            cells.push(RegionCell { tp_b, fp_b, feasible: check_feasible(rates, tp_b, fp_b)? });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_composition_makes_everything_feasible() {
        let rates = BaseRates::new(0.4, 0.4).unwrap();
        for &(tp, fp) in &[(0.0, 0.0), (0.6, 0.4), (0.3, 0.2), (0.0, 0.4)] {
            assert!(check_feasible(&rates, tp, fp).unwrap(), "({tp}, {fp})");
        }
    }

    #[test]
    fn feasible_point_hand_checked() {
        // 0.2/0.2 = 1.0 >= (0.6-0.3)/0.4 = 0.75; 0.2 - 0.75*0.2 = 0.05 <= 0.3
        let rates = BaseRates::new(0.3, 0.6).unwrap();
        assert!(check_feasible(&rates, 0.2, 0.2).unwrap());
    }

    #[test]
    fn infeasible_point_hand_checked() {
        // fp_b/tp_b = 0 < 0.75
        let rates = BaseRates::new(0.3, 0.6).unwrap();
        assert!(!check_feasible(&rates, 0.4, 0.0).unwrap());
        assert!(matches!(
            complete_matrices(&rates, 0.4, 0.0),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn out_of_box_inputs_are_domain_errors() {
        let rates = BaseRates::new(0.3, 0.6).unwrap();
        assert!(matches!(check_feasible(&rates, 0.5, 0.0), Err(Error::Domain(_))));
        assert!(matches!(check_feasible(&rates, 0.1, 0.7), Err(Error::Domain(_))));
        assert!(BaseRates::new(0.0, 0.5).is_err());
        assert!(BaseRates::new(0.5, 1.0).is_err());
    }

    #[test]
    fn completion_hand_checked_values() {
        let rates = BaseRates::new(0.3, 0.6).unwrap();
        let (a, b) = complete_matrices(&rates, 0.2, 0.2).unwrap();
        assert!((a.true_pos - 0.35).abs() < 1e-12);
        assert!((a.false_pos - 0.05).abs() < 1e-12);
        assert!((a.false_neg - 0.35).abs() < 1e-12);
        assert!((a.true_neg - 0.25).abs() < 1e-12);
        assert!((b.true_pos - 0.2).abs() < 1e-12);
        assert!((b.false_pos - 0.2).abs() < 1e-12);
        assert!((b.false_neg - 0.2).abs() < 1e-12);
        assert!((b.true_neg - 0.4).abs() < 1e-12);
        assert!((a.sum() - 1.0).abs() < 1e-12);
        assert!((b.sum() - 1.0).abs() < 1e-12);
        // equal TPRs: 0.35/0.7 = 0.2/0.4 = 0.5
        assert!((a.tpr().unwrap() - 0.5).abs() < 1e-12);
        assert!((b.tpr().unwrap() - 0.5).abs() < 1e-12);
        // equal positive-prediction rates: 0.4 each
        assert!((a.positive_rate() - 0.4).abs() < 1e-12);
        assert!((b.positive_rate() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn verify_gaps_on_unfair_pair() {
        let a = GroupConfusion { true_pos: 0.5, false_pos: 0.0, true_neg: 0.5, false_neg: 0.0 };
        let b = GroupConfusion { true_pos: 0.25, false_pos: 0.25, true_neg: 0.25, false_neg: 0.25 };
        let (eo, _) = verify_fairness_of_completion(&a, &b);
        assert!((eo.unwrap() - 0.5).abs() < 1e-12);
        let (eo_same, sp_same) = verify_fairness_of_completion(&a, &a);
        assert_eq!(eo_same, Some(0.0));
        assert_eq!(sp_same, 0.0);
    }

    #[test]
    fn verify_undefined_without_positive_mass() {
        let a = GroupConfusion { true_pos: 0.0, false_pos: 0.5, true_neg: 0.5, false_neg: 0.0 };
        let b = GroupConfusion { true_pos: 0.25, false_pos: 0.25, true_neg: 0.25, false_neg: 0.25 };
        let (eo, _) = verify_fairness_of_completion(&a, &b);
        assert_eq!(eo, None);
    }

    #[test]
    fn completion_round_trip_over_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        while checked < 1000 {
            let x = rng.random_range(0.05..0.95);
            let y = rng.random_range(0.05..0.95);
            let rates = BaseRates::new(x, y).unwrap();
            let tp_b = rng.random_range(0.0..(1.0 - y));
            let fp_b = rng.random_range(0.0..y);
            if !check_feasible(&rates, tp_b, fp_b).unwrap() {
                continue;
            }
            let (a, b) = complete_matrices(&rates, tp_b, fp_b).unwrap();
            let (eo, sp) = verify_fairness_of_completion(&a, &b);
            if let Some(eo) = eo {
                assert!(eo <= 1e-12);
            }
            assert!(sp <= 1e-12);
            assert!((a.sum() - 1.0).abs() <= 1e-12);
            assert!((b.sum() - 1.0).abs() <= 1e-12);
            assert!(a.entries().iter().all(|&e| e >= -1e-15));
            assert!(b.entries().iter().all(|&e| e >= -1e-15));
            checked += 1;
        }
    }

    // check_feasible must agree with direct non-negativity of the completed
    // entries everywhere except exact constraint boundaries
    #[test]
    fn feasibility_equals_entry_nonnegativity_on_dense_grid() {
        for &(x, y) in &[(0.2, 0.7), (0.7, 0.2), (0.45, 0.55), (0.5, 0.5), (0.1, 0.9)] {
            let rates = BaseRates::new(x, y).unwrap();
            for i in 0..60 {
                for j in 0..60 {
                    let tp_b = (i as f64 + 0.5) / 60.0 * (1.0 - y);
                    let fp_b = (j as f64 + 0.5) / 60.0 * y;
                    let tp_a = (1.0 - x) / (1.0 - y) * tp_b;
                    let fp_a = (x - y) / (1.0 - y) * tp_b + fp_b;
                    let entries =
                        [tp_a, fp_a, x - fp_a, 1.0 - x - tp_a, 1.0 - y - tp_b, y - fp_b];
                    // skip razor-edge points where float rounding could flip
                    if entries.iter().any(|e| e.abs() < 1e-12) {
                        continue;
                    }
                    let direct = entries.iter().all(|&e| e >= 0.0);
                    assert_eq!(
                        check_feasible(&rates, tp_b, fp_b).unwrap(),
                        direct,
                        "(x={x}, y={y}, tp_b={tp_b}, fp_b={fp_b})"
                    );
                }
            }
        }
    }

    #[test]
    fn region_measure_is_one_for_equal_composition() {
        let rates = BaseRates::new(0.5, 0.5).unwrap();
        assert_eq!(region_measure(&rates, 100).unwrap(), 1.0);
    }

    #[test]
    fn region_measure_positive_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let x = rng.random_range(0.05..0.95);
            let y = rng.random_range(0.05..0.95);
            let rates = BaseRates::new(x, y).unwrap();
            assert!(region_measure(&rates, 200).unwrap() > 0.0, "(x={x}, y={y})");
        }
    }

    #[test]
    fn region_measure_stable_under_grid_refinement() {
        let rates = BaseRates::new(0.3, 0.6).unwrap();
        let coarse = region_measure(&rates, 100).unwrap();
        let fine = region_measure(&rates, 1000).unwrap();
        assert!((coarse - fine).abs() < 0.02, "coarse {coarse}, fine {fine}");
    }

    #[test]
    fn region_measure_continuous_in_rates() {
        let base = region_measure(&BaseRates::new(0.3, 0.6).unwrap(), 1000).unwrap();
        let moved = region_measure(&BaseRates::new(0.301, 0.599).unwrap(), 1000).unwrap();
        assert!((base - moved).abs() < 0.05);
    }

    #[test]
    fn region_measure_rejects_low_resolution() {
        let rates = BaseRates::new(0.3, 0.6).unwrap();
        assert!(matches!(region_measure(&rates, 9), Err(Error::Config(_))));
    }

    #[test]
    fn region_scan_row_count() {
        let rates = BaseRates::new(0.3, 0.6).unwrap();
        let cells = region_scan(&rates, 20).unwrap();
        assert_eq!(cells.len(), 400);
        let measure = region_measure(&rates, 20).unwrap();
        let scanned = cells.iter().filter(|c| c.feasible).count() as f64 / 400.0;
        assert_eq!(measure, scanned);
    }
}
