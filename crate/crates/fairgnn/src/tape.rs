//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! The operator set is exactly the closure needed by the encoder, classifier
//! and loss expressions: matmul, sparse-dense matmul, add/sub (with 1x1
//! broadcast), scale, relu, sigmoid, mean over an index set, abs, clamped
//! negative log, and constant-mask multiply (used for dropout and label
//! masking). Forward values are computed eagerly; `backward` replays the tape
//! in reverse. All arithmetic is in f64.

use crate::error::{Error, Result};
use crate::graph::SparseMatrix;
use ndarray::Array2;
use std::sync::Arc;

/// Probabilities are clamped to this range inside the log only (the values
/// seen by fairness terms stay unclamped).
pub const LOG_CLAMP_LO: f64 = 1e-7;
pub const LOG_CLAMP_HI: f64 = 1.0 - 1e-7;

// Sigmoid outputs are pinned into the largest representable open interval so
// the (0, 1) contract survives saturation in f64.
const SIGMOID_LO: f64 = f64::MIN_POSITIVE;
const SIGMOID_HI: f64 = 1.0 - 1e-16;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    MatMul(NodeId, NodeId),
    Spmm(Arc<SparseMatrix>, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Sigmoid(NodeId),
    MeanOverIndexSet(NodeId, Arc<Vec<usize>>),
    Abs(NodeId),
    NegLog(NodeId),
    MaskApply(NodeId, Arc<Array2<f64>>),
}

struct TapeNode {
    op: Op,
    value: Array2<f64>,
}

/// Append-only record of a forward computation. Inputs always precede their
/// consumers, so a single reverse sweep yields exact adjoints.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

/// Gradients of a scalar output with respect to every trainable leaf.
/// Leaves the output does not depend on get an exact zero matrix.
pub struct Gradients {
    grads: Vec<(NodeId, Array2<f64>)>,
}

impl Gradients {
    /// Gradient for a trainable leaf, `None` for any other node.
    pub fn get(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.grads
            .binary_search_by_key(&id.0, |(n, _)| n.0)
            .ok()
            .map(|pos| &self.grads[pos].1)
    }
}

fn shape_of(m: &Array2<f64>) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        self.nodes.push(TapeNode { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId, op: &'static str) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::Contract(format!("{op}: node {} not on this tape", id.0)));
        }
        Ok(())
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Forward value of a 1x1 node.
    pub fn scalar_value(&self, id: NodeId) -> Result<f64> {
        let v = self.value(id);
        if shape_of(v) != (1, 1) {
            return Err(Error::Contract(format!(
                "expected scalar node, got shape {:?}",
                shape_of(v)
            )));
        }
        Ok(v[(0, 0)])
    }

    /// Records a non-trainable leaf.
    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf { trainable: false }, value)
    }

    /// Records a 1x1 non-trainable leaf.
    pub fn scalar_constant(&mut self, value: f64) -> NodeId {
        self.constant(Array2::from_elem((1, 1), value))
    }

    /// Records a trainable leaf (a parameter gradients are taken against).
    pub fn parameter(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf { trainable: true }, value)
    }

    /// Dense matrix product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a, "matmul")?;
        self.check(b, "matmul")?;
        let (ar, ac) = shape_of(self.value(a));
        let (br, bc) = shape_of(self.value(b));
        if ac != br {
            return Err(Error::Shape {
                op: "matmul",
                detail: format!("{ar}x{ac} * {br}x{bc}"),
            });
        }
        let value = self.value(a).dot(self.value(b));
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// Sparse-dense product `s * b`. The sparse factor is a constant.
    pub fn spmm(&mut self, s: Arc<SparseMatrix>, b: NodeId) -> Result<NodeId> {
        self.check(b, "spmm")?;
        let value = s.matmul_dense(self.value(b))?;
        Ok(self.push(Op::Spmm(s, b), value))
    }

    fn broadcast_shapes(
        op: &'static str,
        a: (usize, usize),
        b: (usize, usize),
    ) -> Result<(usize, usize)> {
        if a == b {
            Ok(a)
        } else if a == (1, 1) {
            Ok(b)
        } else if b == (1, 1) {
            Ok(a)
        } else {
            Err(Error::Shape { op, detail: format!("{a:?} vs {b:?}") })
        }
    }

    /// Elementwise sum. One operand may be 1x1, in which case it broadcasts.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a, "add")?;
        self.check(b, "add")?;
        let shape = Self::broadcast_shapes("add", shape_of(self.value(a)), shape_of(self.value(b)))?;
        let av = self.value(a);
        let bv = self.value(b);
        let mut value = Array2::zeros(shape);
        for ((i, j), out) in value.indexed_iter_mut() {
            let x = if shape_of(av) == (1, 1) { av[(0, 0)] } else { av[(i, j)] };
            let y = if shape_of(bv) == (1, 1) { bv[(0, 0)] } else { bv[(i, j)] };
            *out = x + y;
        }
        Ok(self.push(Op::Add(a, b), value))
    }

    /// Elementwise difference with the same broadcast rule as [`Tape::add`].
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a, "sub")?;
        self.check(b, "sub")?;
        let shape = Self::broadcast_shapes("sub", shape_of(self.value(a)), shape_of(self.value(b)))?;
        let av = self.value(a);
        let bv = self.value(b);
        let mut value = Array2::zeros(shape);
        for ((i, j), out) in value.indexed_iter_mut() {
            let x = if shape_of(av) == (1, 1) { av[(0, 0)] } else { av[(i, j)] };
            let y = if shape_of(bv) == (1, 1) { bv[(0, 0)] } else { bv[(i, j)] };
            *out = x - y;
        }
        Ok(self.push(Op::Sub(a, b), value))
    }

    /// Multiplication by a scalar constant.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.check(a, "scale")?;
        let value = self.value(a).mapv(|x| factor * x);
        Ok(self.push(Op::Scale(a, factor), value))
    }

    /// Elementwise max(x, 0). Subgradient 0 at the kink.
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a, "relu")?;
        let value = self.value(a).mapv(|x| if x > 0.0 { x } else { 0.0 });
        Ok(self.push(Op::Relu(a), value))
    }

    /// Elementwise logistic function, saturating strictly inside (0, 1).
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a, "sigmoid")?;
        let value = self.value(a).mapv(stable_sigmoid);
        Ok(self.push(Op::Sigmoid(a), value))
    }

    /// Mean of the rows of a column vector selected by `indices`, as a 1x1
    /// node. The index set must be non-empty and duplicate-free; empty-group
    /// policy is a caller decision.
    pub fn mean_over_index_set(&mut self, a: NodeId, indices: Arc<Vec<usize>>) -> Result<NodeId> {
        self.check(a, "mean-over-index-set")?;
        let v = self.value(a);
        if v.ncols() != 1 {
            return Err(Error::Shape {
                op: "mean-over-index-set",
                detail: format!("expected column vector, got {:?}", shape_of(v)),
            });
        }
        if indices.is_empty() {
            return Err(Error::Contract("mean-over-index-set with empty index set".into()));
        }
        let mut sorted = indices.as_ref().clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract("mean-over-index-set with duplicate indices".into()));
        }
        if *sorted.last().unwrap() >= v.nrows() {
            return Err(Error::Shape {
                op: "mean-over-index-set",
                detail: format!("index {} out of range for {} rows", sorted.last().unwrap(), v.nrows()),
            });
        }
        let mean = indices.iter().map(|&i| v[(i, 0)]).sum::<f64>() / indices.len() as f64;
        Ok(self.push(Op::MeanOverIndexSet(a, indices), Array2::from_elem((1, 1), mean)))
    }

    /// Elementwise absolute value. Subgradient 0 at the kink.
    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a, "abs")?;
        let value = self.value(a).mapv(f64::abs);
        Ok(self.push(Op::Abs(a), value))
    }

    /// Elementwise -ln(x), with x clamped to [1e-7, 1 - 1e-7] inside the log.
    pub fn neg_log(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a, "neg-log")?;
        let value = self.value(a).mapv(|x| -x.clamp(LOG_CLAMP_LO, LOG_CLAMP_HI).ln());
        Ok(self.push(Op::NegLog(a), value))
    }

    /// Elementwise multiplication by a constant mask of the same shape.
    /// Realizes inverted dropout (mask entries 0 or 1/keep) and label masking.
    pub fn mask_apply(&mut self, a: NodeId, mask: Arc<Array2<f64>>) -> Result<NodeId> {
        self.check(a, "dropout-mask-apply")?;
        if shape_of(self.value(a)) != shape_of(&mask) {
            return Err(Error::Shape {
                op: "dropout-mask-apply",
                detail: format!("{:?} vs mask {:?}", shape_of(self.value(a)), shape_of(&mask)),
            });
        }
        let value = self.value(a) * mask.as_ref();
        Ok(self.push(Op::MaskApply(a, mask), value))
    }

    /// Reverse sweep from a scalar output. Returns exact partials for every
    /// trainable leaf recorded on the tape.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        self.check(output, "backward")?;
        if shape_of(self.value(output)) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar output, got {:?}",
                shape_of(self.value(output))
            )));
        }

        let mut adjoints: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        adjoints[output.0] = Some(Array2::from_elem((1, 1), 1.0));

        for id in (0..=output.0).rev() {
            let Some(grad) = adjoints[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Leaf { .. } => {
                    adjoints[id] = Some(grad); // keep: leaves are collected below
                }
                Op::MatMul(a, b) => {
                    let da = grad.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&grad);
                    accumulate(&mut adjoints, *a, da);
                    accumulate(&mut adjoints, *b, db);
                }
                Op::Spmm(s, b) => {
                    let db = s.transpose_matmul_dense(&grad)?;
                    accumulate(&mut adjoints, *b, db);
                }
                Op::Add(a, b) => {
                    let da = reduce_to_shape(&grad, shape_of(self.value(*a)));
                    let db = reduce_to_shape(&grad, shape_of(self.value(*b)));
                    accumulate(&mut adjoints, *a, da);
                    accumulate(&mut adjoints, *b, db);
                }
                Op::Sub(a, b) => {
                    let da = reduce_to_shape(&grad, shape_of(self.value(*a)));
                    let db = reduce_to_shape(&grad.mapv(|x| -x), shape_of(self.value(*b)));
                    accumulate(&mut adjoints, *a, da);
                    accumulate(&mut adjoints, *b, db);
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut adjoints, *a, grad.mapv(|x| factor * x));
                }
                Op::Relu(a) => {
                    let mask = self.value(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    accumulate(&mut adjoints, *a, grad * mask);
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[id].value;
                    accumulate(&mut adjoints, *a, grad * y.mapv(|p| p * (1.0 - p)));
                }
                Op::MeanOverIndexSet(a, indices) => {
                    let g = grad[(0, 0)] / indices.len() as f64;
                    let mut da = Array2::zeros(shape_of(self.value(*a)));
                    for &i in indices.iter() {
                        da[(i, 0)] = g;
                    }
                    accumulate(&mut adjoints, *a, da);
                }
                Op::Abs(a) => {
                    let sign = self.value(*a).mapv(|x| {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut adjoints, *a, grad * sign);
                }
                Op::NegLog(a) => {
                    let slope = self.value(*a).mapv(|x| {
                        if x > LOG_CLAMP_LO && x < LOG_CLAMP_HI {
                            -1.0 / x
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut adjoints, *a, grad * slope);
                }
                Op::MaskApply(a, mask) => {
                    accumulate(&mut adjoints, *a, grad * mask.as_ref());
                }
            }
        }

        let mut grads = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { trainable: true } = node.op {
                let g = adjoints[id].take().unwrap_or_else(|| Array2::zeros(shape_of(&node.value)));
                grads.push((NodeId(id), g));
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(adjoints: &mut [Option<Array2<f64>>], id: NodeId, delta: Array2<f64>) {
    match &mut adjoints[id.0] {
        Some(existing) => *existing += &delta,
        slot @ None => *slot = Some(delta),
    }
}

/// Sums a gradient down to a 1x1 shape when the forward operand was broadcast.
fn reduce_to_shape(grad: &Array2<f64>, target: (usize, usize)) -> Array2<f64> {
    if shape_of(grad) == target {
        grad.clone()
    } else {
        debug_assert_eq!(target, (1, 1));
        Array2::from_elem((1, 1), grad.sum())
    }
}

fn stable_sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(SIGMOID_LO, SIGMOID_HI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_difference, max_relative_error};
    use ndarray::array;

    #[test]
    fn relu_forward_example() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[-1.0, 2.0]]);
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y), &array![[0.0, 2.0]]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut tape = Tape::new();
        let x = tape.scalar_constant(0.0);
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.scalar_value(y).unwrap(), 0.5);
    }

    #[test]
    fn sigmoid_saturates_strictly_inside_unit_interval() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[50.0], [-800.0]]);
        let y = tape.sigmoid(x).unwrap();
        let v = tape.value(y);
        assert!(v[(0, 0)] < 1.0 && v[(0, 0)] > 1.0 - 1e-9);
        assert!(v[(1, 0)] > 0.0);
    }

    #[test]
    fn matmul_forward_example() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[1.0, 2.0]]);
        let b = tape.constant(array![[3.0], [4.0]]);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.scalar_value(c).unwrap(), 11.0);
    }

    #[test]
    fn matmul_shape_mismatch_errors() {
        let mut tape = Tape::new();
        let a = tape.constant(array![[1.0, 2.0]]);
        let b = tape.constant(array![[3.0, 4.0]]);
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape { .. })));
    }

    #[test]
    fn square_via_matmul_has_gradient_two_x() {
        // f(x) = x * x at x = 3: both uses of the leaf accumulate, df/dx = 6
        let mut tape = Tape::new();
        let x = tape.parameter(array![[3.0]]);
        let y = tape.matmul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn relu_subgradient_is_zero_at_negatives() {
        // f(W) = sum(relu(W)) for W = [[-1, 2]] has gradient [[0, 1]]
        let mut tape = Tape::new();
        let w = tape.parameter(array![[-1.0, 2.0]]);
        let r = tape.relu(w).unwrap();
        let ones = tape.constant(array![[1.0], [1.0]]);
        let s = tape.matmul(r, ones).unwrap();
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap(), &array![[0.0, 1.0]]);
    }

    #[test]
    fn backward_rejects_non_scalar_output() {
        let mut tape = Tape::new();
        let x = tape.parameter(array![[1.0, 2.0]]);
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unused_parameter_gets_exact_zero_gradient() {
        let mut tape = Tape::new();
        let used = tape.parameter(array![[2.0]]);
        let unused = tape.parameter(array![[5.0, 7.0]]);
        let y = tape.matmul(used, used).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(unused).unwrap(), &Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn mean_over_index_set_forward_and_backward() {
        let mut tape = Tape::new();
        let x = tape.parameter(array![[1.0], [5.0], [9.0], [100.0]]);
        let m = tape.mean_over_index_set(x, Arc::new(vec![0, 1, 2])).unwrap();
        assert_eq!(tape.scalar_value(m).unwrap(), 5.0);
        let grads = tape.backward(m).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(grads.get(x).unwrap(), &array![[third], [third], [third], [0.0]]);
    }

    #[test]
    fn mean_over_empty_index_set_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.0]]);
        assert!(tape.mean_over_index_set(x, Arc::new(vec![])).is_err());
    }

    #[test]
    fn add_broadcasts_scalar_bias() {
        let mut tape = Tape::new();
        let h = tape.parameter(array![[1.0], [2.0], [3.0]]);
        let b = tape.parameter(array![[10.0]]);
        let y = tape.add(h, b).unwrap();
        assert_eq!(tape.value(y), &array![[11.0], [12.0], [13.0]]);
        let s = tape.mean_over_index_set(y, Arc::new(vec![0, 1, 2])).unwrap();
        let grads = tape.backward(s).unwrap();
        // broadcast side accumulates the full adjoint sum
        assert!((grads.get(b).unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn backward_is_linear_in_the_output() {
        // gradient of (a + b) equals gradient of a plus gradient of b
        let build = |coeff_a: f64, coeff_b: f64| -> (f64, f64) {
            let mut tape = Tape::new();
            let x = tape.parameter(array![[1.5]]);
            let sq = tape.matmul(x, x).unwrap();
            let lin = tape.scale(x, 3.0).unwrap();
            let a = tape.scale(sq, coeff_a).unwrap();
            let b = tape.scale(lin, coeff_b).unwrap();
            let y = tape.add(a, b).unwrap();
            let g = tape.backward(y).unwrap();
            (tape.scalar_value(y).unwrap(), g.get(x).unwrap()[(0, 0)])
        };
        let (_, g_sum) = build(1.0, 1.0);
        let (_, g_a) = build(1.0, 0.0);
        let (_, g_b) = build(0.0, 1.0);
        assert!((g_sum - (g_a + g_b)).abs() < 1e-15);
    }

    // Every operator against central finite differences on random inputs in
    // [-2, 2], steering clear of relu/abs kinks.
    #[test]
    fn operators_match_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for case in 0..60 {
            let rows = 2 + case % 3;
            let mut w = Array2::zeros((rows, 2));
            for v in w.iter_mut() {
                let mut x: f64 = rng.random_range(-2.0..2.0);
                while x.abs() < 1e-4 {
                    x = rng.random_range(-2.0..2.0);
                }
                *v = x;
            }
            let sparse = Arc::new(
                crate::graph::adjacency_from_edges(rows, &[(0, 1)]).unwrap(),
            );
            let mask = Arc::new(Array2::from_elem((rows, 2), 1.25));
            let op = case % 6;

            let eval = |mats: &[Array2<f64>]| -> Result<f64> {
                let mut tape = Tape::new();
                let x = tape.parameter(mats[0].clone());
                let node = match op {
                    0 => tape.relu(x)?,
                    1 => tape.sigmoid(x)?,
                    2 => tape.abs(x)?,
                    3 => {
                        // keep neg-log inputs inside the clamp window
                        let s = tape.sigmoid(x)?;
                        tape.neg_log(s)?
                    }
                    4 => tape.spmm(sparse.clone(), x)?,
                    _ => tape.mask_apply(x, mask.clone())?,
                };
                // sum all entries via matmul with ones on both sides
                let ones_r = tape.constant(Array2::from_elem((1, rows), 1.0));
                let ones_c = tape.constant(Array2::from_elem((2, 1), 1.0));
                let left = tape.matmul(ones_r, node)?;
                let total = tape.matmul(left, ones_c)?;
                tape.scalar_value(total)
            };

            let analytic = {
                let mut tape = Tape::new();
                let x = tape.parameter(w.clone());
                let node = match op {
                    0 => tape.relu(x).unwrap(),
                    1 => tape.sigmoid(x).unwrap(),
                    2 => tape.abs(x).unwrap(),
                    3 => {
                        let s = tape.sigmoid(x).unwrap();
                        tape.neg_log(s).unwrap()
                    }
                    4 => tape.spmm(sparse.clone(), x).unwrap(),
                    _ => tape.mask_apply(x, mask.clone()).unwrap(),
                };
                let ones_r = tape.constant(Array2::from_elem((1, rows), 1.0));
                let ones_c = tape.constant(Array2::from_elem((2, 1), 1.0));
                let left = tape.matmul(ones_r, node).unwrap();
                let total = tape.matmul(left, ones_c).unwrap();
                let grads = tape.backward(total).unwrap();
                vec![grads.get(x).unwrap().clone()]
            };

            let numeric = finite_difference(eval, &[w.clone()], 1e-5).unwrap();
            let err = max_relative_error(&analytic, &numeric, 1e-6);
            assert!(err <= 1e-4, "op {op} case {case}: rel err {err}");
        }
    }
}
