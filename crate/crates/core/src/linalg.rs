//! Minimal dense row-major matrix and slice helpers.
//!
//! The model is small enough (32-d latent, a few dozen utterances) that a
//! transparent hand-rolled kernel keeps the backward pass auditable and the
//! summation order fixed, which the determinism guarantees rely on.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<F>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// `self (m×k) · rhs (k×n)`.
    pub fn matmul(&self, rhs: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, rhs.rows, "matmul shape");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (k, &aik) in a.iter().enumerate() {
                let b = rhs.row(k);
                for (oj, &bkj) in o.iter_mut().zip(b) {
                    *oj = *oj + aik * bkj;
                }
            }
        }
        out
    }

    /// `self (m×k) · rhsᵀ` where `rhs` is `n×k`.
    pub fn matmul_transb(&self, rhs: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, rhs.cols, "matmul_transb shape");
        let mut out = Mat::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (j, oj) in o.iter_mut().enumerate() {
                *oj = dot(a, rhs.row(j));
            }
        }
        out
    }

    /// `selfᵀ · rhs` where `self` is `k×m`, `rhs` is `k×n`.
    pub fn matmul_transa(&self, rhs: &Mat<F>) -> Mat<F> {
        assert_eq!(self.rows, rhs.rows, "matmul_transa shape");
        let mut out = Mat::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = rhs.row(k);
            for (i, &aki) in a.iter().enumerate() {
                let o = out.row_mut(i);
                for (oj, &bkj) in o.iter_mut().zip(b) {
                    *oj = *oj + aki * bkj;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, rhs: &Mat<F>) {
        assert_eq!(self.data.len(), rhs.data.len());
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: F) {
        for a in &mut self.data {
            *a = *a * s;
        }
    }

    /// Per-column mean over rows.
    pub fn col_mean(&self) -> Vec<F> {
        let inv = F::one() / F::c(self.rows as f64);
        let mut out = vec![F::zero(); self.cols];
        for r in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o = *o * inv;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// `y += alpha * x`
pub fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2<F: Real>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// `acc (m×n) += a (m) ⊗ b (n)` restricted to one row: `acc.row(r) += s * b`.
pub fn row_axpy<F: Real>(acc: &mut Mat<F>, r: usize, s: F, b: &[F]) {
    axpy(s, b, acc.row_mut(r));
}

/// Smooth Gaussian-error-based nonlinearity (tanh formulation) used by the
/// scorer MLP, together with its exact derivative.
pub fn gelu<F: Real>(x: F) -> F {
    let half = F::c(0.5);
    let c = F::c(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = F::c(0.044_715);
    let u = c * (x + k * x * x * x);
    half * x * (F::one() + u.tanh())
}

pub fn gelu_prime<F: Real>(x: F) -> F {
    let half = F::c(0.5);
    let c = F::c(0.797_884_560_802_865_4);
    let k = F::c(0.044_715);
    let three = F::c(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let sech2 = F::one() - t * t;
    half * (F::one() + t) + half * x * sech2 * c * (F::one() + three * k * x * x)
}
