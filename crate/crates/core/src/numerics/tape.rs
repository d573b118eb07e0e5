//! Reverse-mode differentiation over a linear operation record.
//!
//! Values are computed eagerly as operations are recorded. `backward`
//! walks the record from the loss towards the leaves in exact reverse
//! execution order and accumulates vector-Jacobian products. Leaves created
//! with `requires_grad = true` receive a gradient (zeros when the loss does
//! not depend on them); nothing else does.

use super::ops::{check_positive, norm};
use super::tensor::{Tensor, NORM_EPS};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    SoftmaxRows { x: usize, scale: f64 },
    L2NormalizeRows(usize),
    LogSumExpRows(usize),
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    GatherRows { x: usize, indices: Vec<usize> },
    Sum(usize),
    Mean(usize),
    CosineRows(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Outcome of a backward pass.
#[derive(Debug, Clone, Default)]
pub struct BackwardReport {
    /// Indices of the non-leaf operations whose VJP ran, in visit order.
    pub visited: Vec<usize>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every recorded operation and gradient.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass; `None` for values that are not
    /// trainable leaves or before `backward` ran.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        if self.consumed {
            return Err(Error::TapeState(
                "cannot record on a tape after backward; reset it first".into(),
            ));
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(out, Op::MatMul(a.0, b.0), &[a.0, b.0])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x.0), &[x.0])
    }

    pub fn softmax_rows(&mut self, x: Var, scale: f64) -> Result<Var> {
        check_positive("softmax scale", scale)?;
        let out = self.value(x).softmax_rows(scale)?;
        self.push(out, Op::SoftmaxRows { x: x.0, scale }, &[x.0])
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).l2_normalize_rows()?;
        self.push(out, Op::L2NormalizeRows(x.0), &[x.0])
    }

    pub fn logsumexp_rows(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).logsumexp_rows();
        self.push(out, Op::LogSumExpRows(x.0), &[x.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        self.push(out, Op::Add(a.0, b.0), &[a.0, b.0])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        self.push(out, Op::Mul(a.0, b.0), &[a.0, b.0])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let out = self.value(x).scale(factor);
        self.push(out, Op::Scale(x.0, factor), &[x.0])
    }

    /// `a - b`, composed from `scale` and `add`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let neg = self.scale(b, -1.0)?;
        self.add(a, neg)
    }

    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let out = self.value(x).gather_rows(indices)?;
        self.push(
            out,
            Op::GatherRows {
                x: x.0,
                indices: indices.to_vec(),
            },
            &[x.0],
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).sum();
        self.push(out, Op::Sum(x.0), &[x.0])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).mean();
        self.push(out, Op::Mean(x.0), &[x.0])
    }

    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).cosine_rows(self.value(b))?;
        self.push(out, Op::CosineRows(a.0, b.0), &[a.0, b.0])
    }

    /// Propagates `∂loss/∂leaf` to every trainable leaf. Gradients from
    /// multiple uses of a value add up.
    pub fn backward(&mut self, loss: Var) -> Result<BackwardReport> {
        if self.consumed {
            return Err(Error::TapeState(
                "backward already ran on this tape; reset it first".into(),
            ));
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut report = BackwardReport::default();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            report.visited.push(idx);
            self.propagate(idx, &upstream, &mut grads);
        }

        for (idx, node) in self.nodes.iter_mut().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                let data = grads
                    .get_mut(idx)
                    .and_then(Option::take)
                    .unwrap_or_else(|| vec![0.0; node.value.numel()]);
                node.grad = Some(Tensor::from_parts_unchecked(
                    node.value.shape().to_vec(),
                    data,
                ));
            }
        }
        Ok(report)
    }

    fn propagate(&self, idx: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                let (m, k) = av.dims();
                let n = bv.cols();
                if self.nodes[*a].requires_grad {
                    let bd = bv.data();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let dy_row = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let b_row = &bd[p * n..(p + 1) * n];
                            da[i * k + p] = dy_row.iter().zip(b_row).map(|(g, v)| g * v).sum();
                        }
                    }
                    accumulate(grads, *a, da);
                }
                if self.nodes[*b].requires_grad {
                    let ad = av.data();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let dy_row = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = ad[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for (d, g) in db[p * n..(p + 1) * n].iter_mut().zip(dy_row) {
                                *d += aip * g;
                            }
                        }
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Transpose(x) => {
                // y is [c, r]; dx is [r, c]
                let (r, c) = self.nodes[*x].value.dims();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] = dy[j * r + i];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::SoftmaxRows { x, scale } => {
                let (r, c) = node.value.dims();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let ys = &y[i * c..(i + 1) * c];
                    let gs = &dy[i * c..(i + 1) * c];
                    let inner: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        dx[i * c + j] = scale * ys[j] * (gs[j] - inner);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::L2NormalizeRows(x) => {
                let xv = &self.nodes[*x].value;
                let (r, c) = xv.dims();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let n = norm(xv.row(i));
                    let ys = &y[i * c..(i + 1) * c];
                    let gs = &dy[i * c..(i + 1) * c];
                    let inner: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        dx[i * c + j] = (gs[j] - ys[j] * inner) / n;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::LogSumExpRows(x) => {
                let xv = &self.nodes[*x].value;
                let (r, c) = xv.dims();
                let xd = xv.data();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] = dy[i] * (xd[i * c + j] - y[i]).exp();
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Add(a, b) => {
                for &v in [a, b] {
                    if self.nodes[v].requires_grad {
                        accumulate(grads, v, dy.to_vec());
                    }
                }
            }
            Op::Mul(a, b) => {
                let ad = self.nodes[*a].value.data();
                let bd = self.nodes[*b].value.data();
                if self.nodes[*a].requires_grad {
                    accumulate(grads, *a, dy.iter().zip(bd).map(|(g, v)| g * v).collect());
                }
                if self.nodes[*b].requires_grad {
                    accumulate(grads, *b, dy.iter().zip(ad).map(|(g, v)| g * v).collect());
                }
            }
            Op::Scale(x, f) => {
                accumulate(grads, *x, dy.iter().map(|g| g * f).collect());
            }
            Op::GatherRows { x, indices } => {
                let (r, c) = self.nodes[*x].value.dims();
                let mut dx = vec![0.0; r * c];
                for (out_row, &src) in indices.iter().enumerate() {
                    for j in 0..c {
                        dx[src * c + j] += dy[out_row * c + j];
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Sum(x) => {
                let n = self.nodes[*x].value.numel();
                accumulate(grads, *x, vec![dy[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.nodes[*x].value.numel();
                accumulate(grads, *x, vec![dy[0] / n as f64; n]);
            }
            Op::CosineRows(a, b) => {
                let av = &self.nodes[*a].value;
                let bv = &self.nodes[*b].value;
                let (r, c) = av.dims();
                let mut da = vec![0.0; r * c];
                let mut db = vec![0.0; r * c];
                for i in 0..r {
                    let ar = av.row(i);
                    let br = bv.row(i);
                    let na = norm(ar);
                    let nb = norm(br);
                    if na < NORM_EPS || nb < NORM_EPS {
                        continue;
                    }
                    let cos = y[i];
                    let g = dy[i];
                    for j in 0..c {
                        da[i * c + j] = g * (br[j] / (na * nb) - cos * ar[j] / (na * na));
                        db[i * c + j] = g * (ar[j] / (na * nb) - cos * br[j] / (nb * nb));
                    }
                }
                if self.nodes[*a].requires_grad {
                    accumulate(grads, *a, da);
                }
                if self.nodes[*b].requires_grad {
                    accumulate(grads, *b, db);
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, delta: Vec<f64>) {
    match &mut grads[idx] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}
