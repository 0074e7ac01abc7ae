//! Central finite-difference gradient oracle.
//!
//! Deliberately independent of the tape's reverse sweep: it only ever calls
//! the supplied loss closure, so it can certify `backward` end to end.

use crate::error::Result;
use crate::model::ModelParams;
use ndarray::Array2;

/// Central differences (f(x + eps e) - f(x - eps e)) / (2 eps) per coordinate
/// of each matrix in `mats`. The closure must be deterministic (dropout off).
pub fn finite_difference<F>(f: F, mats: &[Array2<f64>], eps: f64) -> Result<Vec<Array2<f64>>>
where
    F: Fn(&[Array2<f64>]) -> Result<f64>,
{
    let mut work: Vec<Array2<f64>> = mats.to_vec();
    let mut grads = Vec::with_capacity(mats.len());
    for m in 0..mats.len() {
        let mut grad = Array2::zeros(mats[m].raw_dim());
        for idx in 0..mats[m].len() {
            let (rows, cols) = (mats[m].nrows(), mats[m].ncols());
            let coord = (idx / cols, idx % cols);
            debug_assert!(coord.0 < rows);
            let original = work[m][coord];
            work[m][coord] = original + eps;
            let plus = f(&work)?;
            work[m][coord] = original - eps;
            let minus = f(&work)?;
            work[m][coord] = original;
            grad[coord] = (plus - minus) / (2.0 * eps);
        }
        grads.push(grad);
    }
    Ok(grads)
}

/// Finite-difference gradient of a loss over every model parameter matrix,
/// in [`ModelParams::matrices`] order.
pub fn finite_difference_gradient<F>(
    f: F,
    params: &ModelParams,
    eps: f64,
) -> Result<Vec<Array2<f64>>>
where
    F: Fn(&ModelParams) -> Result<f64>,
{
    let mats: Vec<Array2<f64>> = params.matrices().into_iter().cloned().collect();
    let wrapped = |perturbed: &[Array2<f64>]| -> Result<f64> {
        let mut p = params.clone();
        for (slot, m) in p.matrices_mut().into_iter().zip(perturbed.iter()) {
            slot.assign(m);
        }
        f(&p)
    };
    finite_difference(wrapped, &mats, eps)
}

/// Largest relative discrepancy between two gradient lists:
/// |a - b| / max(floor, |a|, |b|), maximized over all coordinates.
pub fn max_relative_error(a: &[Array2<f64>], b: &[Array2<f64>], floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (ma, mb) in a.iter().zip(b.iter()) {
        for (&x, &y) in ma.iter().zip(mb.iter()) {
            let denom = floor.max(x.abs()).max(y.abs());
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_gradient_is_two_theta() {
        let theta = vec![array![[1.0]]];
        let grads =
            finite_difference(|m| Ok(m[0][(0, 0)] * m[0][(0, 0)]), &theta, 1e-4).unwrap();
        assert!((grads[0][(0, 0)] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let theta = vec![array![[3.0, -1.0], [0.5, 2.0]]];
        let grads = finite_difference(|_| Ok(7.25), &theta, 1e-5).unwrap();
        assert_eq!(grads[0], Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn relative_error_uses_floor_for_tiny_values() {
        let a = vec![array![[1e-9]]];
        let b = vec![array![[0.0]]];
        assert!(max_relative_error(&a, &b, 1e-6) <= 1e-3);
    }
}
