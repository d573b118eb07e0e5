//! Forward kernels. The tape records these and supplies the matching
//! vector-Jacobian products in `tape.rs`.

use super::tensor::{Tensor, NORM_EPS};
use crate::error::{Error, Result};

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::Parameter {
            name,
            value,
            reason: "must be a finite positive number",
        });
    }
    Ok(())
}

/// Numerically stable `log Σ exp(x)` over a slice.
pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl Tensor {
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims();
        let (k2, n) = other.dims();
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(), other.shape()));
        }
        let a = self.data();
        let b = other.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aip * bv;
                }
            }
        }
        Ok(Tensor::from_parts_unchecked(vec![m, n], out))
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = self.dims();
        let src = self.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Tensor::from_parts_unchecked(vec![c, r], out)
    }

    /// Row-wise softmax of `scale · x`, computed with max subtraction.
    pub fn softmax_rows(&self, scale: f64) -> Result<Tensor> {
        check_positive("softmax scale", scale)?;
        let (r, c) = self.dims();
        let mut out = self.data().to_vec();
        for i in 0..r {
            let row = &mut out[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (scale * (*v - max)).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        Ok(Tensor::from_parts_unchecked(self.shape().to_vec(), out))
    }

    /// Divides each row by its Euclidean norm.
    pub fn l2_normalize_rows(&self) -> Result<Tensor> {
        let (r, c) = self.dims();
        let mut out = self.data().to_vec();
        for i in 0..r {
            let row = &mut out[i * c..(i + 1) * c];
            let n = norm(row);
            if !(n > NORM_EPS) {
                return Err(Error::DegenerateRow { row: i });
            }
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        Ok(Tensor::from_parts_unchecked(self.shape().to_vec(), out))
    }

    /// Per-row log-sum-exp, shape `[rows, 1]`.
    pub fn logsumexp_rows(&self) -> Tensor {
        let (r, c) = self.dims();
        let data = self.data();
        let out = (0..r).map(|i| logsumexp(&data[i * c..(i + 1) * c])).collect();
        Tensor::from_parts_unchecked(vec![r, 1], out)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let data = self.data().iter().map(|v| v * factor).collect();
        Tensor::from_parts_unchecked(self.shape().to_vec(), data)
    }

    /// Selects rows by index, shape `[indices.len(), cols]`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::Empty("gather indices"));
        }
        let (r, c) = self.dims();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::Contract(format!(
                    "gather index {i} out of range for {r} rows"
                )));
            }
            out.extend_from_slice(self.row(i));
        }
        Ok(Tensor::from_parts_unchecked(vec![indices.len(), c], out))
    }

    pub fn sum(&self) -> Tensor {
        Tensor::scalar(self.data().iter().sum())
    }

    pub fn mean(&self) -> Tensor {
        Tensor::scalar(self.data().iter().sum::<f64>() / self.numel() as f64)
    }

    /// Row-wise cosine similarity, shape `[rows, 1]`. A pair where either
    /// row has norm below `1e-12` scores 0.
    pub fn cosine_rows(&self, other: &Tensor) -> Result<Tensor> {
        if self.dims() != other.dims() {
            return Err(Error::dim("cosine_rows", self.shape(), other.shape()));
        }
        let r = self.rows();
        let out = (0..r)
            .map(|i| cosine(self.row(i), other.row(i)))
            .collect();
        Ok(Tensor::from_parts_unchecked(vec![r, 1], out))
    }

    fn zip_with(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if self.dims() != other.dims() {
            return Err(Error::dim(op, self.shape(), other.shape()));
        }
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::from_parts_unchecked(self.shape().to_vec(), data))
    }
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na < NORM_EPS || nb < NORM_EPS {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}
