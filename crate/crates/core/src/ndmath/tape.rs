//! Reverse-mode automatic differentiation over 2-D tensors.
//!
//! A [`Tape`] records every primitive in evaluation order, so node indices
//! are already a topological order and the backward sweep is a single
//! reverse pass. Gradients are only propagated into nodes that depend on a
//! trainable leaf.

use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into};
use super::{NdError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum UnaryKind {
    Neg,
    Scale(f64),
    AddScalar(f64),
    Tanh,
    Relu,
    Exp,
    Log,
    Square,
    Softplus,
    Clamp(f64, f64),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryKind, Var, Var),
    Unary(UnaryKind, Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    Gather(Var, Vec<usize>),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Transpose(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward sweep: `d loss / d node` for every node that
/// depends on a trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn broadcast_shape(
    op: &'static str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<(usize, usize), NdError> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(NdError::ShapeMismatch {
            op,
            lhs: vec![a.0, a.1],
            rhs: vec![b.0, b.1],
        }),
    }
}

#[inline]
fn bidx(shape: (usize, usize), i: usize, j: usize) -> usize {
    let r = if shape.0 == 1 { 0 } else { i };
    let c = if shape.1 == 1 { 0 } else { j };
    r * shape.1 + c
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        // Every node value is built through `dims2`-checked paths.
        self.nodes[v.0].value.dims2().expect("tape values are rank <= 2")
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, NdError> {
        value.dims2()?;
        Ok(self.push(value, Op::Leaf, false))
    }

    /// Trainable leaf; its gradient is available after [`Tape::backward`].
    pub fn param(&mut self, value: &Tensor) -> Result<Var, NdError> {
        value.dims2()?;
        let mut v = value.clone();
        v.zero_grad();
        Ok(self.push(v, Op::Leaf, true))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(NdError::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_into(
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var, NdError> {
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
            BinaryKind::Min => "min",
        };
        let sa = self.dims(a);
        let sb = self.dims(b);
        let (r, c) = broadcast_shape(name, sa, sb)?;
        let av = self.nodes[a.0].value.data();
        let bv = self.nodes[b.0].value.data();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                let x = av[bidx(sa, i, j)];
                let y = bv[bidx(sb, i, j)];
                out.push(match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                    BinaryKind::Min => x.min(y),
                });
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::Binary(kind, a, b), rg))
    }

    /// Elementwise sum with row/column/scalar broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.binary(BinaryKind::Div, a, b)
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.binary(BinaryKind::Min, a, b)
    }

    fn unary(&mut self, kind: UnaryKind, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let data = x
            .data()
            .iter()
            .map(|&v| match kind {
                UnaryKind::Neg => -v,
                UnaryKind::Scale(k) => v * k,
                UnaryKind::AddScalar(k) => v + k,
                UnaryKind::Tanh => v.tanh(),
                UnaryKind::Relu => v.max(0.0),
                UnaryKind::Exp => v.exp(),
                UnaryKind::Log => v.ln(),
                UnaryKind::Square => v * v,
                UnaryKind::Softplus => softplus(v),
                UnaryKind::Clamp(lo, hi) => v.clamp(lo, hi),
            })
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(value, Op::Unary(kind, a), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Neg, a)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(UnaryKind::Scale(k), a)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(UnaryKind::AddScalar(k), a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Tanh, a)
    }

    /// ReLU; the derivative at exactly zero is taken as zero.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Log, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Square, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(UnaryKind::Softplus, a)
    }

    /// Clamp into `[lo, hi]`; gradient passes only inside the range.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(UnaryKind::Clamp(lo, hi), a)
    }

    /// Sum of all elements, as a `1 x 1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.nodes[a.0].value.data();
        let s = x.iter().sum::<f64>() / x.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Per-row sum: `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let x = self.nodes[a.0].value.data();
        let out = (0..r).map(|i| x[i * c..(i + 1) * c].iter().sum()).collect();
        let rg = self.rg(a);
        self.push(Tensor::column(out), Op::SumCols(a), rg)
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let x = self.nodes[a.0].value.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let lse = logsumexp(row);
            for j in 0..c {
                out[i * c + j] = row[j] - lse;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(r, c, out).expect("shape"), Op::LogSoftmax(a), rg)
    }

    /// Row-wise log-sum-exp: `r x c -> r x 1`.
    pub fn logsumexp_cols(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let x = self.nodes[a.0].value.data();
        let out = (0..r).map(|i| logsumexp(&x[i * c..(i + 1) * c])).collect();
        let rg = self.rg(a);
        self.push(Tensor::column(out), Op::LogSumExp(a), rg)
    }

    /// Picks column `index[i]` from row `i`: `r x c -> r x 1`.
    pub fn gather(&mut self, a: Var, index: Vec<usize>) -> Result<Var, NdError> {
        let (r, c) = self.dims(a);
        if index.len() != r || index.iter().any(|&k| k >= c) {
            return Err(NdError::ShapeMismatch {
                op: "gather",
                lhs: vec![r, c],
                rhs: vec![index.len(), index.iter().copied().max().unwrap_or(0) + 1],
            });
        }
        let x = self.nodes[a.0].value.data();
        let out = index.iter().enumerate().map(|(i, &k)| x[i * c + k]).collect();
        let rg = self.rg(a);
        Ok(self.push(Tensor::column(out), Op::Gather(a, index), rg))
    }

    /// Column-wise concatenation of nodes with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NdError> {
        let rows = parts.first().map(|&p| self.dims(p).0).unwrap_or(0);
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims(p);
            if r != rows {
                return Err(NdError::ShapeMismatch {
                    op: "concat",
                    lhs: vec![rows, total],
                    rhs: vec![r, c],
                });
            }
            total += c;
        }
        let mut out = vec![0.0; rows * total];
        let mut offset = 0;
        for &p in parts {
            let (_, c) = self.dims(p);
            let x = self.nodes[p.0].value.data();
            for i in 0..rows {
                out[i * total + offset..i * total + offset + c]
                    .copy_from_slice(&x[i * c..(i + 1) * c]);
            }
            offset += c;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::matrix(rows, total, out)?,
            Op::Concat(parts.to_vec()),
            rg,
        ))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NdError> {
        let (r, c) = self.dims(a);
        if start >= end || end > c {
            return Err(NdError::ShapeMismatch {
                op: "slice_cols",
                lhs: vec![r, c],
                rhs: vec![start, end],
            });
        }
        let w = end - start;
        let x = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&x[i * c + start..i * c + end]);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::matrix(r, w, out)?, Op::Slice(a, start, end), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.nodes[a.0].value.transpose().expect("rank 2");
        let rg = self.rg(a);
        self.push(t, Op::Transpose(a), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NdError> {
        let shape = self.dims(loss);
        if shape != (1, 1) {
            return Err(NdError::NotScalar {
                shape: vec![shape.0, shape.1],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if self.nodes[v.0].requires_grad {
                let n = self.nodes[v.0].value.len();
                let buf = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
                f(buf);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let (_, n) = self.dims(*b);
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |ga| matmul_bt_into(g, bv, ga, m, n, k));
                acc(*b, &mut |gb| matmul_at_into(av, g, gb, m, k, n));
            }
            Op::Binary(kind, a, b) => {
                let (r, c) = node.value.dims2().expect("rank 2");
                let (sa, sb) = (self.dims(*a), self.dims(*b));
                let (av, bv) = (val(*a), val(*b));
                let kind = *kind;
                acc(*a, &mut |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            let ia = bidx(sa, i, j);
                            let x = av[ia];
                            let y = bv[bidx(sb, i, j)];
                            let d = match kind {
                                BinaryKind::Add | BinaryKind::Sub => 1.0,
                                BinaryKind::Mul => y,
                                BinaryKind::Div => 1.0 / y,
                                BinaryKind::Min => (x <= y) as u8 as f64,
                            };
                            ga[ia] += g[i * c + j] * d;
                        }
                    }
                });
                acc(*b, &mut |gb| {
                    for i in 0..r {
                        for j in 0..c {
                            let ib = bidx(sb, i, j);
                            let x = av[bidx(sa, i, j)];
                            let y = bv[ib];
                            let d = match kind {
                                BinaryKind::Add => 1.0,
                                BinaryKind::Sub => -1.0,
                                BinaryKind::Mul => x,
                                BinaryKind::Div => -x / (y * y),
                                BinaryKind::Min => (x > y) as u8 as f64,
                            };
                            gb[ib] += g[i * c + j] * d;
                        }
                    }
                });
            }
            Op::Unary(kind, a) => {
                let x = val(*a);
                let y = node.value.data();
                let kind = *kind;
                acc(*a, &mut |ga| {
                    for i in 0..ga.len() {
                        let d = match kind {
                            UnaryKind::Neg => -1.0,
                            UnaryKind::Scale(k) => k,
                            UnaryKind::AddScalar(_) => 1.0,
                            UnaryKind::Tanh => 1.0 - y[i] * y[i],
                            UnaryKind::Relu => (x[i] > 0.0) as u8 as f64,
                            UnaryKind::Exp => y[i],
                            UnaryKind::Log => 1.0 / x[i],
                            UnaryKind::Square => 2.0 * x[i],
                            UnaryKind::Softplus => sigmoid(x[i]),
                            UnaryKind::Clamp(lo, hi) => (x[i] >= lo && x[i] <= hi) as u8 as f64,
                        };
                        ga[i] += g[i] * d;
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = self.nodes[a.0].value.len() as f64;
                acc(*a, &mut |ga| ga.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::SumCols(a) => {
                let (r, c) = self.dims(*a);
                acc(*a, &mut |ga| {
                    for i in 0..r {
                        ga[i * c..(i + 1) * c].iter_mut().for_each(|x| *x += g[i]);
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let (r, c) = self.dims(*a);
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for i in 0..r {
                        let gs: f64 = g[i * c..(i + 1) * c].iter().sum();
                        for j in 0..c {
                            ga[i * c + j] += g[i * c + j] - y[i * c + j].exp() * gs;
                        }
                    }
                });
            }
            Op::LogSumExp(a) => {
                let (r, c) = self.dims(*a);
                let x = val(*a);
                let y = node.value.data();
                acc(*a, &mut |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[i] * (x[i * c + j] - y[i]).exp();
                        }
                    }
                });
            }
            Op::Gather(a, index) => {
                let (_, c) = self.dims(*a);
                acc(*a, &mut |ga| {
                    for (i, &k) in index.iter().enumerate() {
                        ga[i * c + k] += g[i];
                    }
                });
            }
            Op::Concat(parts) => {
                let (rows, total) = node.value.dims2().expect("rank 2");
                let mut offset = 0;
                for &p in parts {
                    let (_, c) = self.dims(p);
                    acc(p, &mut |gp| {
                        for i in 0..rows {
                            for j in 0..c {
                                gp[i * c + j] += g[i * total + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::Slice(a, start, end) => {
                let (r, c) = self.dims(*a);
                let w = end - start;
                acc(*a, &mut |ga| {
                    for i in 0..r {
                        for j in 0..w {
                            ga[i * c + start + j] += g[i * w + j];
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let (r, c) = self.dims(*a);
                acc(*a, &mut |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
        }
    }
}

pub(crate) fn logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
