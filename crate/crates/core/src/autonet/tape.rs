//! Tape-based reverse-mode differentiation over small dense matrices.
//!
//! Every operation appends a node holding its forward value. Nodes are
//! created in topological order, so the backward sweep is a single reverse
//! pass from the loss. A tape may be differentiated once; call
//! [`Tape::reset`] before recording the next computation.

use std::ops::Range;
use std::sync::Arc;

use super::{AutonetError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Disjoint index ranges over a flattened tensor, each normalized separately.
pub type Groups = Arc<Vec<Range<usize>>>;

/// Elementwise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    /// Softmax within each group of the flattened output. Entries outside
    /// every group are zero.
    GroupSoftmax(Groups),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BlockMatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Activate(Var, Activation),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    differentiated: bool,
}

/// Gradients of one scalar with respect to every recorded node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient for `var`; zeros when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Vec<f64> {
        self.grads[var.0].clone().unwrap_or_else(|| vec![0.0; self.lens[var.0]])
    }
}

fn shape_err(msg: String) -> AutonetError {
    AutonetError::Shape(msg)
}

/// `a (m x k) * b (k x n)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &b_pj) in row.iter_mut().zip(b_row) {
                *o += a_ip * b_pj;
            }
        }
    }
    out
}

/// `a (m x k) * b^T` where `b` is `n x k`.
fn matmul_bt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            out[i * n + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T * b` where `a` is `k x m` and `b` is `k x n`.
fn matmul_at(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let a_pi = a[p * m + i];
            if a_pi == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &b_pj) in row.iter_mut().zip(b_row) {
                *o += a_pi * b_pj;
            }
        }
    }
    out
}

fn group_softmax(x: &[f64], groups: &[Range<usize>]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for g in groups {
        let max = x[g.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in g.clone() {
            let e = (x[i] - max).exp();
            out[i] = e;
            total += e;
        }
        for i in g.clone() {
            out[i] /= total;
        }
    }
    out
}

/// Applies an activation to a flat buffer outside any tape.
pub fn activate(x: &[f64], activation: &Activation) -> Vec<f64> {
    match activation {
        Activation::Identity => x.to_vec(),
        Activation::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
        Activation::Tanh => x.iter().map(|v| v.tanh()).collect(),
        Activation::Sigmoid => x.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
        Activation::GroupSoftmax(groups) => group_softmax(x, groups),
    }
}

fn activation_backward(y: &[f64], dy: &[f64], activation: &Activation) -> Vec<f64> {
    match activation {
        Activation::Identity => dy.to_vec(),
        Activation::Relu => y.iter().zip(dy).map(|(&y, &g)| if y > 0.0 { g } else { 0.0 }).collect(),
        Activation::Tanh => y.iter().zip(dy).map(|(y, g)| g * (1.0 - y * y)).collect(),
        Activation::Sigmoid => y.iter().zip(dy).map(|(y, g)| g * y * (1.0 - y)).collect(),
        Activation::GroupSoftmax(groups) => {
            let mut dx = vec![0.0; y.len()];
            for g in groups.iter() {
                let dot: f64 = g.clone().map(|i| y[i] * dy[i]).sum();
                for i in g.clone() {
                    dx[i] = y[i] * (dy[i] - dot);
                }
            }
            dx
        }
    }
}

fn validate_groups(groups: &[Range<usize>], len: usize) -> Result<(), AutonetError> {
    let mut covered = vec![false; len];
    for g in groups {
        if g.is_empty() || g.end > len {
            return Err(shape_err(format!("softmax group {g:?} invalid for length {len}")));
        }
        for i in g.clone() {
            if covered[i] {
                return Err(shape_err(format!("softmax groups overlap at index {i}")));
            }
            covered[i] = true;
        }
    }
    Ok(())
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

    /// Drops every recorded node so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.differentiated = false;
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Records an input. The gradient of the loss with respect to it is
    /// available after [`Tape::backward`] whether it is a parameter or data.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let mut tensor = tensor;
        tensor.clear_grad();
        self.push(tensor, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutonetError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, k2, n) = (ta.rows(), ta.cols(), tb.rows(), tb.cols());
        if k != k2 {
            return Err(shape_err(format!("matmul of {m}x{k} by {k2}x{n}")));
        }
        let out = matmul(ta.values(), tb.values(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out), Op::MatMul(a, b)))
    }

    /// Left-multiplies every consecutive `n`-row block of `x` by the `n x n`
    /// matrix `p`: one propagation per stacked sample.
    pub fn block_matmul(&mut self, p: Var, x: Var) -> Result<Var, AutonetError> {
        let (tp, tx) = (self.value(p), self.value(x));
        let n = tp.rows();
        if tp.cols() != n || n == 0 || tx.rows() % n != 0 {
            return Err(shape_err(format!(
                "block propagation of {}x{} over {}x{}",
                tp.rows(),
                tp.cols(),
                tx.rows(),
                tx.cols()
            )));
        }
        let f = tx.cols();
        let mut out = Vec::with_capacity(tx.len());
        for block in tx.values().chunks(n * f) {
            out.extend(matmul(tp.values(), block, n, n, f));
        }
        let t = Tensor::matrix(tx.rows(), f, out);
        Ok(self.push(t, Op::BlockMatMul(p, x)))
    }

    /// Adds a `1 x n` bias to every row of an `m x n` input.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, AutonetError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (m, n) = (tx.rows(), tx.cols());
        if tb.len() != n {
            return Err(shape_err(format!("bias of length {} for {m}x{n} input", tb.len())));
        }
        let mut out = tx.values().to_vec();
        for row in out.chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(tb.values()) {
                *o += b;
            }
        }
        Ok(self.push(Tensor::matrix(m, n, out), Op::AddBias(x, bias)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), AutonetError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(shape_err(format!(
                "{what} of {}x{} and {}x{}",
                ta.rows(),
                ta.cols(),
                tb.rows(),
                tb.cols()
            )));
        }
        Ok(())
    }

    fn elementwise(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, AutonetError> {
        self.same_shape(a, b, what)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out = ta.values().iter().zip(tb.values()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::matrix(ta.rows(), ta.cols(), out);
        Ok(self.push(t, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutonetError> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutonetError> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutonetError> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let out = t.values().iter().map(|v| v * c).collect();
        let t = Tensor::matrix(t.rows(), t.cols(), out);
        self.push(t, Op::Scale(x, c))
    }

    pub fn activate(&mut self, x: Var, activation: Activation) -> Result<Var, AutonetError> {
        let t = self.value(x);
        if let Activation::GroupSoftmax(groups) = &activation {
            validate_groups(groups, t.len())?;
        }
        let out = activate(t.values(), &activation);
        let t = Tensor::matrix(t.rows(), t.cols(), out);
        Ok(self.push(t, Op::Activate(x, activation)))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var, AutonetError> {
        let t = self.value(x);
        if t.len() != rows * cols {
            return Err(shape_err(format!("cannot reshape {} values to {rows}x{cols}", t.len())));
        }
        let t = Tensor::matrix(rows, cols, t.values().to_vec());
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Concatenates along rows (`axis = 0`) or columns (`axis = 1`).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, AutonetError> {
        if parts.is_empty() || axis > 1 {
            return Err(shape_err("concat needs at least one part and axis 0 or 1".into()));
        }
        let first = self.value(parts[0]);
        let out = if axis == 0 {
            let cols = first.cols();
            let mut values = Vec::new();
            let mut rows = 0;
            for &p in parts {
                let t = self.value(p);
                if t.cols() != cols {
                    return Err(shape_err(format!("row concat of {} and {} columns", cols, t.cols())));
                }
                rows += t.rows();
                values.extend_from_slice(t.values());
            }
            Tensor::matrix(rows, cols, values)
        } else {
            let rows = first.rows();
            let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
            if parts.iter().any(|&p| self.value(p).rows() != rows) {
                return Err(shape_err("column concat with differing row counts".into()));
            }
            let total: usize = widths.iter().sum();
            let mut values = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for (&p, &w) in parts.iter().zip(&widths) {
                    values.extend_from_slice(&self.value(p).values()[r * w..(r + 1) * w]);
                }
            }
            Tensor::matrix(rows, total, values)
        };
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).values().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Gradient of the scalar `loss` with respect to every node.
    ///
    /// Each node's gradient is the sum over all of its uses. A second call
    /// without [`Tape::reset`] is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, AutonetError> {
        if self.differentiated {
            return Err(AutonetError::BackwardTwice);
        }
        if self.value(loss).len() != 1 {
            return Err(AutonetError::NotScalar(self.value(loss).shape().to_vec()));
        }
        self.differentiated = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn accumulate(grads: &mut [Option<Vec<f64>>], var: Var, g: Vec<f64>) {
            match &mut grads[var.0] {
                Some(existing) => existing.iter_mut().zip(g).for_each(|(e, v)| *e += v),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let da = matmul_bt(&dy, tb.values(), m, n, k);
                    let db = matmul_at(ta.values(), &dy, m, k, n);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::BlockMatMul(p, x) => {
                    let (tp, tx) = (self.value(*p), self.value(*x));
                    let (n, f) = (tp.rows(), tx.cols());
                    let mut dp = vec![0.0; n * n];
                    let mut dx = Vec::with_capacity(tx.len());
                    for (g, xb) in dy.chunks(n * f).zip(tx.values().chunks(n * f)) {
                        for (acc, v) in dp.iter_mut().zip(matmul_bt(g, xb, n, f, n)) {
                            *acc += v;
                        }
                        dx.extend(matmul_at(tp.values(), g, n, n, f));
                    }
                    accumulate(&mut grads, *p, dp);
                    accumulate(&mut grads, *x, dx);
                }
                Op::AddBias(x, b) => {
                    let n = node.value.cols();
                    let mut db = vec![0.0; n];
                    for row in dy.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *x, dy.clone());
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, dy.clone());
                    accumulate(&mut grads, *b, dy.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, dy.iter().map(|g| -g).collect());
                    accumulate(&mut grads, *a, dy.clone());
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = dy.iter().zip(tb.values()).map(|(g, y)| g * y).collect();
                    let db = dy.iter().zip(ta.values()).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(x, c) => accumulate(&mut grads, *x, dy.iter().map(|g| g * c).collect()),
                Op::Activate(x, act) => {
                    let dx = activation_backward(node.value.values(), &dy, act);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Reshape(x) => accumulate(&mut grads, *x, dy.clone()),
                Op::Concat(parts, axis) => {
                    if *axis == 0 {
                        let mut offset = 0;
                        for &p in parts {
                            let len = self.value(p).len();
                            accumulate(&mut grads, p, dy[offset..offset + len].to_vec());
                            offset += len;
                        }
                    } else {
                        let rows = node.value.rows();
                        let total = node.value.cols();
                        let mut offset = 0;
                        for &p in parts {
                            let w = self.value(p).cols();
                            let mut g = Vec::with_capacity(rows * w);
                            for r in 0..rows {
                                g.extend_from_slice(&dy[r * total + offset..r * total + offset + w]);
                            }
                            accumulate(&mut grads, p, g);
                            offset += w;
                        }
                    }
                }
                Op::Sum(x) => {
                    let len = self.value(*x).len();
                    accumulate(&mut grads, *x, vec![dy[0]; len]);
                }
            }
            grads[idx] = Some(dy);
        }

        let lens = self.nodes.iter().map(|n| n.value.len()).collect();
        Ok(Gradients { grads, lens })
    }
}
