//! Reverse-mode differentiation over a recorded tape of primitive operations.
//!
//! A [`Tape`] owns every intermediate value of one forward pass. Operations
//! are appended in evaluation order, so the node list is already
//! topologically sorted and [`Tape::backward`] is a single reverse sweep.
//!
//! The primitive set is deliberately small: add, sub, mul, matrix product
//! (with optional transposes), exp, log, neg, sigmoid, relu, sum, mean,
//! max-with-constant and dot. Element-wise primitives accept a scalar on
//! either side; everything else (bias rows, row norms, masked means) is
//! composed from the primitives in the helpers at the bottom of this file.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{as_matrix, matmul_raw, pairwise_dot, pairwise_sum, Tensor, NORM_EPS};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul {
        a: usize,
        b: usize,
        trans_a: bool,
        trans_b: bool,
    },
    Exp(usize),
    Log(usize),
    Neg(usize),
    Sigmoid(usize),
    Relu(usize),
    Sum(usize),
    Mean(usize),
    /// `max(x, c)`; ties take the constant branch.
    MaxConst(usize, f64),
    Dot(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MatMul { .. } => "matmul",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Neg(_) => "neg",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MaxConst(..) => "max_const",
            Op::Dot(..) => "dot",
        }
    }

    fn inputs(&self) -> (Option<usize>, Option<usize>) {
        match *self {
            Op::Leaf => (None, None),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Dot(a, b) => (Some(a), Some(b)),
            Op::MatMul { a, b, .. } => (Some(a), Some(b)),
            Op::Exp(a)
            | Op::Log(a)
            | Op::Neg(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MaxConst(a, _) => (Some(a), None),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar root with respect to every trainable leaf.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    tape: u64,
    grads: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(&v.idx)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn elementwise(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    if b.is_scalar() {
        let y = b.data()[0];
        return Ok(a.map(|x| f(x, y)));
    }
    if a.is_scalar() {
        let x = a.data()[0];
        return Ok(b.map(|y| f(x, y)));
    }
    Err(Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
}

/// Sum an upstream gradient back down to an operand's shape (scalar operands
/// of element-wise ops receive the total).
fn reduce_to(g: &Tensor, target: &Tensor) -> Tensor {
    if g.shape() == target.shape() {
        g.clone()
    } else {
        Tensor::full(target.shape().to_vec(), pairwise_sum(g.data()))
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (x, y) in acc.data_mut().iter_mut().zip(g.data()) {
                *x += y;
            }
        }
        None => *slot = Some(g),
    }
}

fn matmul_shape(a: &Tensor, b: &Tensor, trans_b: bool, m: usize, n: usize) -> Vec<usize> {
    if b.shape().len() == 1 && !trans_b && a.shape().len() == 2 {
        vec![m]
    } else {
        vec![m, n]
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        &self.nodes[v.idx].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.idx].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(Error::Provenance(format!(
                "variable from tape {} used on tape {}",
                v.tape, self.id
            )));
        }
        Ok(v.idx)
    }

    fn compute(nodes: &[Node], op: Op) -> Result<Tensor> {
        let val = |i: usize| &nodes[i].value;
        let out = match op {
            Op::Leaf => unreachable!("leaves are not computed"),
            Op::Add(a, b) => elementwise("add", val(a), val(b), |x, y| x + y)?,
            Op::Sub(a, b) => elementwise("sub", val(a), val(b), |x, y| x - y)?,
            Op::Mul(a, b) => elementwise("mul", val(a), val(b), |x, y| x * y)?,
            Op::MatMul {
                a,
                b,
                trans_a,
                trans_b,
            } => {
                let (m, n, data) = matmul_raw(val(a), trans_a, val(b), trans_b)?;
                Tensor::new(matmul_shape(val(a), val(b), trans_b, m, n), data)?
            }
            Op::Exp(a) => val(a).map(f64::exp),
            Op::Log(a) => val(a).map(f64::ln),
            Op::Neg(a) => val(a).map(|x| -x),
            Op::Sigmoid(a) => val(a).map(sigmoid),
            Op::Relu(a) => val(a).map(|x| if x > 0.0 { x } else { 0.0 }),
            Op::Sum(a) => Tensor::scalar(pairwise_sum(val(a).data())),
            Op::Mean(a) => {
                let t = val(a);
                Tensor::scalar(pairwise_sum(t.data()) / t.len() as f64)
            }
            Op::MaxConst(a, c) => val(a).map(|x| if x > c { x } else { c }),
            Op::Dot(a, b) => {
                let (x, y) = (val(a), val(b));
                if x.len() != y.len() {
                    return Err(Error::dim("dot", format!("{:?} vs {:?}", x.shape(), y.shape())));
                }
                Tensor::scalar(pairwise_dot(x.data(), y.data()))
            }
        };
        if !out.all_finite() {
            return Err(Error::Numeric(format!("non-finite output from {}", op.name())));
        }
        Ok(out)
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let value = Self::compute(&self.nodes, op)?;
        let (a, b) = op.inputs();
        let requires_grad = a.is_some_and(|i| self.nodes[i].requires_grad)
            || b.is_some_and(|i| self.nodes[i].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Add(self.check(a)?, self.check(b)?);
        self.record(op)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Sub(self.check(a)?, self.check(b)?);
        self.record(op)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Mul(self.check(a)?, self.check(b)?);
        self.record(op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    /// Matrix product `op(a) · op(b)` with optional transposes.
    pub fn matmul_t(&mut self, a: Var, trans_a: bool, b: Var, trans_b: bool) -> Result<Var> {
        let op = Op::MatMul {
            a: self.check(a)?,
            b: self.check(b)?,
            trans_a,
            trans_b,
        };
        self.record(op)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let op = Op::Exp(self.check(a)?);
        self.record(op)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let op = Op::Log(self.check(a)?);
        self.record(op)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let op = Op::Neg(self.check(a)?);
        self.record(op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let op = Op::Sigmoid(self.check(a)?);
        self.record(op)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let op = Op::Relu(self.check(a)?);
        self.record(op)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let op = Op::Sum(self.check(a)?);
        self.record(op)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let op = Op::Mean(self.check(a)?);
        self.record(op)
    }

    pub fn max_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let op = Op::MaxConst(self.check(a)?, c);
        self.record(op)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Dot(self.check(a)?, self.check(b)?);
        self.record(op)
    }

    /// Recompute every non-leaf node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut replayed: Vec<Node> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match node.op {
                Op::Leaf => node.value.clone(),
                op => Self::compute(&replayed, op)?,
            };
            replayed.push(Node {
                value,
                op: node.op,
                requires_grad: node.requires_grad,
            });
        }
        Ok(replayed.into_iter().map(|n| n.value).collect())
    }

    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_idx = self.check(root)?;
        let root_val = &self.nodes[root_idx].value;
        if !root_val.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_val.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root_idx + 1];
        grads[root_idx] = Some(Tensor::full(root_val.shape().to_vec(), 1.0));

        for idx in (0..=root_idx).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        let mut out = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                let g = grads
                    .get_mut(idx)
                    .and_then(Option::take)
                    .unwrap_or_else(|| node.value.zeros_like());
                out.insert(idx, g);
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads: out,
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let val = |i: usize| &self.nodes[i].value;
        let wants = |i: usize| self.nodes[i].requires_grad;
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(&mut grads[a], reduce_to(g, val(a)));
                }
                if wants(b) {
                    accumulate(&mut grads[b], reduce_to(g, val(b)));
                }
            }
            Op::Sub(a, b) => {
                if wants(a) {
                    accumulate(&mut grads[a], reduce_to(g, val(a)));
                }
                if wants(b) {
                    accumulate(&mut grads[b], reduce_to(&g.map(|x| -x), val(b)));
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    let ga = elementwise("mul", g, val(b), |x, y| x * y)?;
                    accumulate(&mut grads[a], reduce_to(&ga, val(a)));
                }
                if wants(b) {
                    let gb = elementwise("mul", g, val(a), |x, y| x * y)?;
                    accumulate(&mut grads[b], reduce_to(&gb, val(b)));
                }
            }
            Op::MatMul {
                a,
                b,
                trans_a,
                trans_b,
            } => {
                let (m, n) = (as_matrix(val(a)), as_matrix(val(b)));
                let rows = if trans_a { m.1 } else { m.0 };
                let cols = if trans_b { n.0 } else { n.1 };
                let g2 = g.clone().reshape(vec![rows, cols])?;
                if wants(a) {
                    // d op(a) = G · op(b)^T
                    let (_, _, data) = if trans_a {
                        matmul_raw(val(b), trans_b, &g2, true)?
                    } else {
                        matmul_raw(&g2, false, val(b), !trans_b)?
                    };
                    let ga = Tensor::new(val(a).shape().to_vec(), data)?;
                    accumulate(&mut grads[a], ga);
                }
                if wants(b) {
                    // d op(b) = op(a)^T · G
                    let (_, _, data) = if trans_b {
                        matmul_raw(&g2, true, val(a), trans_a)?
                    } else {
                        matmul_raw(val(a), !trans_a, &g2, false)?
                    };
                    let gb = Tensor::new(val(b).shape().to_vec(), data)?;
                    accumulate(&mut grads[b], gb);
                }
            }
            Op::Exp(a) => {
                if wants(a) {
                    accumulate(&mut grads[a], elementwise("exp", g, &node.value, |x, y| x * y)?);
                }
            }
            Op::Log(a) => {
                if wants(a) {
                    accumulate(&mut grads[a], elementwise("log", g, val(a), |x, y| x / y)?);
                }
            }
            Op::Neg(a) => {
                if wants(a) {
                    accumulate(&mut grads[a], g.map(|x| -x));
                }
            }
            Op::Sigmoid(a) => {
                if wants(a) {
                    let ga = elementwise("sigmoid", g, &node.value, |x, s| x * s * (1.0 - s))?;
                    accumulate(&mut grads[a], ga);
                }
            }
            Op::Relu(a) => {
                if wants(a) {
                    let ga = elementwise("relu", g, val(a), |x, y| if y > 0.0 { x } else { 0.0 })?;
                    accumulate(&mut grads[a], ga);
                }
            }
            Op::Sum(a) => {
                if wants(a) {
                    accumulate(&mut grads[a], Tensor::full(val(a).shape().to_vec(), g.data()[0]));
                }
            }
            Op::Mean(a) => {
                if wants(a) {
                    let n = val(a).len() as f64;
                    accumulate(&mut grads[a], Tensor::full(val(a).shape().to_vec(), g.data()[0] / n));
                }
            }
            Op::MaxConst(a, c) => {
                if wants(a) {
                    let ga = elementwise("max_const", g, val(a), |x, y| if y > c { x } else { 0.0 })?;
                    accumulate(&mut grads[a], ga);
                }
            }
            Op::Dot(a, b) => {
                let s = g.data()[0];
                if wants(a) {
                    accumulate(&mut grads[a], val(b).map(|y| s * y).reshape(val(a).shape().to_vec())?);
                }
                if wants(b) {
                    accumulate(&mut grads[b], val(a).map(|x| s * x).reshape(val(b).shape().to_vec())?);
                }
            }
        }
        Ok(())
    }

    // ---- composed helpers -------------------------------------------------

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let s = self.scalar(c);
        self.mul(a, s)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let s = self.scalar(c);
        self.add(a, s)
    }

    /// `x (n×k) + 1ₙ bᵀ` for a bias vector `b` of length k.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = self.value(x).rows();
        let ones = self.constant(Tensor::full(vec![n, 1], 1.0));
        // A length-k vector is a k×1 column for the matrix product.
        let spread = self.matmul_t(ones, false, bias, true)?;
        self.add(x, spread)
    }

    /// Per-row sums of a matrix as an `n×1` column.
    pub fn row_sums(&mut self, x: Var) -> Result<Var> {
        let k = self.value(x).cols();
        let ones = self.constant(Tensor::full(vec![k, 1], 1.0));
        self.matmul(x, ones)
    }

    /// Repeat an `n×1` column across `k` columns.
    pub fn spread_columns(&mut self, col: Var, k: usize) -> Result<Var> {
        let ones = self.constant(Tensor::full(vec![1, k], 1.0));
        self.matmul(col, ones)
    }

    /// Normalize each row of a matrix to unit Euclidean norm.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let sq = self.mul(x, x)?;
        let norms_sq = self.row_sums(sq)?;
        let min_sq = NORM_EPS * NORM_EPS;
        if let Some((i, v)) = self
            .value(norms_sq)
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= min_sq))
        {
            return Err(Error::Degenerate(format!(
                "row {i} has norm {:e} below {NORM_EPS:e}",
                v.sqrt()
            )));
        }
        let log_n = self.log(norms_sq)?;
        let half = self.scale(log_n, -0.5)?;
        let inv = self.exp(half)?;
        let k = self.value(x).cols();
        let spread = self.spread_columns(inv, k)?;
        self.mul(x, spread)
    }

    /// Mean of `x` over the entries where the constant `mask` is one.
    pub fn masked_mean(&mut self, x: Var, mask: &Tensor) -> Result<Var> {
        let count: f64 = mask.data().iter().sum();
        if count <= 0.0 {
            return Err(Error::Composition("masked mean over an empty selection".into()));
        }
        let m = self.constant(mask.clone());
        let picked = self.mul(x, m)?;
        let total = self.sum(picked)?;
        self.scale(total, 1.0 / count)
    }
}
