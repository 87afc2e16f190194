//! Dense row-major f64 matrices and the handful of GEMM kernels the models
//! need. Parallelism is over disjoint output rows only, so results are
//! bit-identical regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Work threshold (multiply-adds) below which kernels stay single-threaded.
const PAR_THRESHOLD: usize = 64 * 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// y += a * x
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with eight independent accumulators so the compiler can
/// vectorize the reduction without reassociating a single serial sum.
#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0f64; 8];
    let chunks = x.len() / 8;
    for c in 0..chunks {
        let xs = &x[c * 8..c * 8 + 8];
        let ys = &y[c * 8..c * 8 + 8];
        for i in 0..8 {
            acc[i] += xs[i] * ys[i];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..x.len() {
        tail += x[i] * y[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// C = A (m x k) * B (k x n)
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = Mat::zeros(m, n);
    let work = m * k * n;
    let kernel = |(i, out_row): (usize, &mut [f64])| {
        let a_row = a.row(i);
        for l in 0..k {
            let av = a_row[l];
            if av != 0.0 {
                axpy(av, b.row(l), out_row);
            }
        }
    };
    if work >= PAR_THRESHOLD {
        out.data
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| kernel((i, row)));
    } else {
        out.data
            .chunks_mut(n)
            .enumerate()
            .for_each(|(i, row)| kernel((i, row)));
    }
    out
}

/// C = A (m x n) * B^T where B is (k x n); result is (m x k).
pub fn matmul_bt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.cols, "matmul_bt shape mismatch");
    let (m, n, k) = (a.rows, a.cols, b.rows);
    let mut out = Mat::zeros(m, k);
    let work = m * n * k;
    let kernel = |(i, out_row): (usize, &mut [f64])| {
        let a_row = a.row(i);
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = dot(a_row, b.row(j));
        }
    };
    if work >= PAR_THRESHOLD {
        out.data
            .par_chunks_mut(k)
            .enumerate()
            .for_each(|(i, row)| kernel((i, row)));
    } else {
        out.data
            .chunks_mut(k)
            .enumerate()
            .for_each(|(i, row)| kernel((i, row)));
    }
    out
}

/// C = A^T * B where A is (m x p) and B is (m x q); result is (p x q).
///
/// This is the gradient kernel dW = delta^T * x; it accumulates into `out`
/// so a caller can sum contributions across batches.
pub fn matmul_ta_acc(a: &Mat, b: &Mat, out: &mut Mat) {
    assert_eq!(a.rows, b.rows, "matmul_ta shape mismatch");
    assert_eq!(out.rows, a.cols);
    assert_eq!(out.cols, b.cols);
    let (m, p, q) = (a.rows, a.cols, b.cols);
    let work = m * p * q;
    if work >= PAR_THRESHOLD {
        out.data.par_chunks_mut(q).enumerate().for_each(|(i, row)| {
            for r in 0..m {
                let av = a.at(r, i);
                if av != 0.0 {
                    axpy(av, b.row(r), row);
                }
            }
        });
    } else {
        for r in 0..m {
            let b_row = b.row(r);
            for i in 0..p {
                let av = a.at(r, i);
                if av != 0.0 {
                    axpy(av, b_row, out.row_mut(i));
                }
            }
        }
    }
}

/// Numerically stable in-place softmax over each row.
pub fn softmax_rows(m: &mut Mat) {
    let cols = m.cols;
    let apply = |row: &mut [f64]| {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    };
    if m.rows * cols >= PAR_THRESHOLD {
        m.data.par_chunks_mut(cols).for_each(apply);
    } else {
        m.data.chunks_mut(cols).for_each(apply);
    }
}
