//! Dense row-major matrices.
//!
//! Everything the encoder needs fits in a small set of f64 kernels; keeping
//! them hand-written makes the backward pass transparent and the whole stack
//! dependency-free and deterministic.

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Scalar>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Scalar) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    /// Entries drawn from a normal with the given standard deviation.
    pub fn randn(rows: usize, cols: usize, std: Scalar, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.normal() * std).collect();
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Scalar {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Scalar) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: Scalar) {
        self.data[i * self.cols + j] += v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [Scalar] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[Scalar] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Scalar] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · otherᵀ`.
    pub fn matmul_transpose(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_transpose shape mismatch");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                out.set(i, j, dot(a_row, other.row(j)));
            }
        }
        out
    }

    /// `selfᵀ · other`, the usual weight-gradient contraction.
    pub fn transpose_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "transpose_matmul shape mismatch");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: Scalar) {
        for v in &mut self.data {
            *v *= s;
        }
    }
}

#[inline]
pub fn dot(a: &[Scalar], b: &[Scalar]) -> Scalar {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

pub fn add_into(target: &mut [Scalar], source: &[Scalar]) {
    debug_assert_eq!(target.len(), source.len());
    for (t, s) in target.iter_mut().zip(source.iter()) {
        *t += *s;
    }
}

pub fn axpy(target: &mut [Scalar], alpha: Scalar, source: &[Scalar]) {
    debug_assert_eq!(target.len(), source.len());
    for (t, s) in target.iter_mut().zip(source.iter()) {
        *t += alpha * *s;
    }
}

/// Numerically stable softmax over a slice, in place.
pub fn softmax_in_place(xs: &mut [Scalar]) {
    let max = xs.iter().cloned().fold(Scalar::NEG_INFINITY, Scalar::max);
    let mut denom = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        denom += *x;
    }
    for x in xs.iter_mut() {
        *x /= denom;
    }
}

pub fn sigmoid(x: Scalar) -> Scalar {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_against_hand_computed() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_transpose_matches_explicit_transpose() {
        let a = Mat::from_vec(2, 3, vec![1.0, -2.0, 0.5, 4.0, 5.0, -6.0]);
        let b = Mat::from_vec(4, 3, (0..12).map(|i| i as Scalar * 0.3).collect());
        let bt = Mat::from_fn(3, 4, |i, j| b.get(j, i));
        assert_eq!(a.matmul_transpose(&b), a.matmul(&bt));
    }

    #[test]
    fn transpose_matmul_matches_explicit_transpose() {
        let a = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 4, (0..12).map(|i| i as Scalar - 3.0).collect());
        let at = Mat::from_fn(2, 3, |i, j| a.get(j, i));
        assert_eq!(a.transpose_matmul(&b), at.matmul(&b));
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut xs = vec![1.0, 2.0, 3.0, -1.0];
        softmax_in_place(&mut xs);
        let sum: Scalar = xs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_symmetry() {
        assert_eq!(sigmoid(0.0), 0.5);
        let x = 1.37;
        assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
    }
}
