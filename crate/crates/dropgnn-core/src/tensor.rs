//! Dense row-major f64 matrices sized for this workload: activations are
//! tall and skinny (many rows, 1..=130 columns), weights are tiny.
//!
//! The matmul keeps a full output row of accumulators live across the k loop;
//! for the column counts used here that row fits in vector registers, which
//! is what the training loop's throughput hangs on. Reductions always run in
//! index order so results are bit-reproducible.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// out = a * b, (m x k)(k x n).
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    match b.cols {
        8 => mm_fixed::<8>(&mut out.data, &a.data, a.rows, a.cols, &b.data),
        16 => mm_fixed::<16>(&mut out.data, &a.data, a.rows, a.cols, &b.data),
        32 => mm_fixed::<32>(&mut out.data, &a.data, a.rows, a.cols, &b.data),
        64 => mm_fixed::<64>(&mut out.data, &a.data, a.rows, a.cols, &b.data),
        _ => mm_generic(&mut out.data, &a.data, a.rows, a.cols, &b.data, b.cols),
    }
    Ok(out)
}

/// Monomorphized kernel: the N accumulators stay in registers across k.
fn mm_fixed<const N: usize>(out: &mut [f64], a: &[f64], m: usize, k: usize, b: &[f64]) {
    for i in 0..m {
        let mut acc = [0.0f64; N];
        let arow = &a[i * k..(i + 1) * k];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * N..(kk + 1) * N];
            for j in 0..N {
                acc[j] += av * brow[j];
            }
        }
        out[i * N..(i + 1) * N].copy_from_slice(&acc);
    }
}

fn mm_generic(out: &mut [f64], a: &[f64], m: usize, k: usize, b: &[f64], n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// out = a^T * b, a is (m x k), b is (m x n), result (k x n).
/// Accumulates over rows of both; the k x n output is small and cache-hot.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "matmul_tn {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let (k, n) = (a.cols, b.cols);
    let mut out = Matrix::zeros(k, n);
    for i in 0..a.rows {
        let arow = a.row(i);
        let brow = b.row(i);
        for (kk, &av) in arow.iter().enumerate() {
            let orow = &mut out.data[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn fixed_kernel_matches_generic() {
        let mut rng = crate::rng::Rng::from_seed(4);
        for &n in &[8usize, 16, 32, 64] {
            let m = 7;
            let k = 13;
            let a = Matrix::from_vec(m, k, (0..m * k).map(|_| rng.normal()).collect()).unwrap();
            let b = Matrix::from_vec(k, n, (0..k * n).map(|_| rng.normal()).collect()).unwrap();
            let fast = matmul(&a, &b).unwrap();
            let mut slow = Matrix::zeros(m, n);
            mm_generic(&mut slow.data, &a.data, m, k, &b.data, n);
            assert_eq!(fast.data, slow.data, "n = {n}");
        }
    }

    #[test]
    fn tn_matches_explicit_transpose() {
        let mut rng = crate::rng::Rng::from_seed(8);
        let a = Matrix::from_vec(9, 4, (0..36).map(|_| rng.normal()).collect()).unwrap();
        let b = Matrix::from_vec(9, 5, (0..45).map(|_| rng.normal()).collect()).unwrap();
        let fast = matmul_tn(&a, &b).unwrap();
        let slow = matmul(&a.transpose(), &b).unwrap();
        for (x, y) in fast.data.iter().zip(&slow.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
