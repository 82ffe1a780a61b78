//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation applied to its variables in execution
//! order. Because a node can only reference nodes created before it, the
//! record is topologically sorted by construction and [`Tape::backward`]
//! is a single reverse sweep.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{check_finite, Broadcast, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    tape: u64,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Exp,
    Ln,
    Sqrt,
    Softplus,
    Tanh,
    Relu,
    Square,
    Neg,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Binary { kind: Binary, a: usize, b: usize, bc: Broadcast },
    Unary { kind: Unary, a: usize },
    Scale(usize, T),
    AddScalar(usize),
    Sum(usize),
    Mean(usize),
    SumRows(usize),
    ConcatCols(Vec<usize>),
    SliceCols { a: usize, start: usize },
    GatherRows { a: usize, idx: Vec<usize> },
    BroadcastRows(usize),
    Reshape(usize),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Append-only record of a computation.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every node on a tape.
#[derive(Debug)]
pub struct Gradients<T> {
    tape: u64,
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `v`; nodes that do not influence the loss get exact zeros.
    pub fn wrt(&self, v: Var) -> Result<Tensor<T>> {
        if v.tape != self.tape || v.index >= self.grads.len() {
            return Err(Error::Detached);
        }
        let shape = self.shapes[v.index].clone();
        Ok(match &self.grads[v.index] {
            Some(g) => Tensor::raw(shape, g.clone()),
            None => Tensor::zeros(&shape),
        })
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var { index: self.nodes.len() - 1, tape: self.id }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape == self.id && v.index < self.nodes.len() {
            Ok(v.index)
        } else {
            Err(Error::Detached)
        }
    }

    fn val(&self, i: usize) -> &Tensor<T> {
        &self.nodes[i].value
    }

    /// Records an input. Parameters and constants are both leaves.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        Ok(self.val(self.idx(v)?))
    }

    pub fn shape(&self, v: Var) -> Result<&[usize]> {
        Ok(self.val(self.idx(v)?).shape())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let out = self.val(ia).matmul(self.val(ib))?;
        Ok(self.push(out, Op::MatMul(ia, ib)))
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let (x, y) = (self.val(ia), self.val(ib));
        let bc = Broadcast::resolve("binary", x.shape(), y.shape())?;
        let out = match kind {
            Binary::Add => x.add(y),
            Binary::Sub => x.sub(y),
            Binary::Mul => x.mul(y),
            Binary::Div => x.div(y),
        }?;
        Ok(self.push(out, Op::Binary { kind, a: ia, b: ib, bc }))
    }

    /// `a + b`; `b` may be a row vector or a scalar broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let x = self.val(ia);
        let out = match kind {
            Unary::Exp => x.exp(),
            Unary::Ln => x.ln(),
            Unary::Sqrt => x.sqrt(),
            Unary::Softplus => x.softplus(),
            Unary::Tanh => x.tanh(),
            Unary::Relu => x.relu(),
            Unary::Square => x.square(),
            Unary::Neg => x.neg(),
        }?;
        Ok(self.push(out, Op::Unary { kind, a: ia }))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Ln, a)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sqrt, a)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Softplus, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Square, a)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Neg, a)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).scale(c)?;
        Ok(self.push(out, Op::Scale(ia, c)))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).add_scalar(c)?;
        Ok(self.push(out, Op::AddScalar(ia)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).sum()?;
        Ok(self.push(out, Op::Sum(ia)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).mean()?;
        Ok(self.push(out, Op::Mean(ia)))
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).sum_rows()?;
        Ok(self.push(out, Op::SumRows(ia)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts.iter().map(|&p| self.idx(p)).collect::<Result<Vec<_>>>()?;
        let vals: Vec<&Tensor<T>> = idx.iter().map(|&i| self.val(i)).collect();
        let out = Tensor::concat_cols(&vals)?;
        Ok(self.push(out, Op::ConcatCols(idx)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).slice_cols(start, end)?;
        Ok(self.push(out, Op::SliceCols { a: ia, start }))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).gather_rows(idx)?;
        Ok(self.push(out, Op::GatherRows { a: ia, idx: idx.to_vec() }))
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).broadcast_rows(n)?;
        Ok(self.push(out, Op::BroadcastRows(ia)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let ia = self.idx(a)?;
        let out = self.val(ia).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(ia)))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// The tape is not consumed: calling this twice yields identical gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = self.idx(loss)?;
        if !self.val(root).is_scalar() {
            return Err(Error::NonScalarLoss(self.val(root).shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; root + 1];
        grads[root] = Some(vec![T::one()]);
        for i in (0..=root).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            tape: self.id,
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        check_finite("backward", g)?;
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let out_shape = node.value.shape().to_vec();
                let gt = Tensor::raw(out_shape, g.to_vec());
                let ga = gt.matmul(&self.val(*b).transpose()?)?;
                let gb = self.val(*a).transpose()?.matmul(&gt)?;
                accumulate(grads, *a, ga.data());
                accumulate(grads, *b, gb.data());
            }
            Op::Binary { kind, a, b, bc } => {
                let (x, y) = (self.val(*a), self.val(*b));
                let cols = x.cols();
                let (xd, yd) = (x.data(), y.data());
                let mut ga = vec![T::zero(); xd.len()];
                let mut gb = vec![T::zero(); yd.len()];
                for k in 0..xd.len() {
                    let j = bc.index(k, cols);
                    let (da, db) = match kind {
                        Binary::Add => (g[k], g[k]),
                        Binary::Sub => (g[k], -g[k]),
                        Binary::Mul => (g[k] * yd[j], g[k] * xd[k]),
                        Binary::Div => (g[k] / yd[j], -g[k] * xd[k] / (yd[j] * yd[j])),
                    };
                    ga[k] = da;
                    gb[j] = gb[j] + db;
                }
                accumulate(grads, *a, &ga);
                accumulate(grads, *b, &gb);
            }
            Op::Unary { kind, a } => {
                let x = self.val(*a).data();
                let y = node.value.data();
                let two = T::of(2.0);
                let ga: Vec<T> = (0..x.len())
                    .map(|k| match kind {
                        Unary::Exp => g[k] * y[k],
                        Unary::Ln => g[k] / x[k],
                        Unary::Sqrt => g[k] / (two * y[k]),
                        Unary::Softplus => g[k] * scalar::sigmoid(x[k]),
                        Unary::Tanh => g[k] * (T::one() - y[k] * y[k]),
                        Unary::Relu => {
                            if x[k] > T::zero() {
                                g[k]
                            } else {
                                T::zero()
                            }
                        }
                        Unary::Square => g[k] * two * x[k],
                        Unary::Neg => -g[k],
                    })
                    .collect();
                accumulate(grads, *a, &ga);
            }
            Op::Scale(a, c) => {
                let ga: Vec<T> = g.iter().map(|&v| v * *c).collect();
                accumulate(grads, *a, &ga);
            }
            Op::AddScalar(a) | Op::Reshape(a) => accumulate(grads, *a, g),
            Op::Sum(a) => {
                let n = self.val(*a).numel();
                accumulate(grads, *a, &vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.val(*a).numel();
                accumulate(grads, *a, &vec![g[0] / T::of(n as f64); n]);
            }
            Op::SumRows(a) => {
                let n = self.val(*a).rows();
                let ga: Vec<T> = (0..n).flat_map(|_| g.iter().copied()).collect();
                accumulate(grads, *a, &ga);
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut offset = 0;
                for &p in parts {
                    let m = self.val(p).cols();
                    let mut gp = Vec::with_capacity(rows * m);
                    for r in 0..rows {
                        gp.extend_from_slice(&g[r * total + offset..r * total + offset + m]);
                    }
                    accumulate(grads, p, &gp);
                    offset += m;
                }
            }
            Op::SliceCols { a, start } => {
                let src = self.val(*a);
                let (rows, m) = (src.rows(), src.cols());
                let w = node.value.cols();
                let mut ga = vec![T::zero(); rows * m];
                for r in 0..rows {
                    ga[r * m + start..r * m + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                accumulate(grads, *a, &ga);
            }
            Op::GatherRows { a, idx } => {
                let src = self.val(*a);
                let m = src.cols();
                let mut ga = vec![T::zero(); src.numel()];
                for (r, &s) in idx.iter().enumerate() {
                    for c in 0..m {
                        ga[s * m + c] = ga[s * m + c] + g[r * m + c];
                    }
                }
                accumulate(grads, *a, &ga);
            }
            Op::BroadcastRows(a) => {
                let m = self.val(*a).numel();
                let mut ga = vec![T::zero(); m];
                for chunk in g.chunks(m) {
                    for (o, &v) in ga.iter_mut().zip(chunk) {
                        *o = *o + v;
                    }
                }
                accumulate(grads, *a, &ga);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Vec<T>>], i: usize, g: &[T]) {
    match &mut grads[i] {
        Some(acc) => {
            for (a, &v) in acc.iter_mut().zip(g) {
                *a = *a + v;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
}
