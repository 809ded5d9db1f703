//! Dense row-major matrices and the small set of matrix kernels the models
//! need. All floating point is `f64`; dimensions are fixed at construction.
//!
//! Shape checks on these kernels are `assert!`s: a mismatch here is a bug in
//! the calling model code, not a user error. Operations exposed as part of
//! the public model API (`nn`, `matching`, ...) validate shapes up front and
//! return typed errors instead.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;

/// Row-major `rows x cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Identity-like matrix (ones on the main diagonal), possibly rectangular.
    pub fn eye(rows: usize, cols: usize) -> Self {
        Matrix::from_fn(rows, cols, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copy of column `j`.
    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += alpha * other`, elementwise.
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }
}

/// `C = A * B` for `A (m x k)`, `B (k x n)`.
///
/// ikj loop order keeps the inner loop contiguous in both `B` and `C`; zero
/// entries of `A` are skipped, which pays off when `A` holds sparse binary
/// observation batches.
pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(
        a.cols, b.rows,
        "matmul: inner dimensions differ ({} vs {})",
        a.cols, b.rows
    );
    let mut c = Matrix::zeros(a.rows, b.cols);
    let n = b.cols;
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = &mut c.data[i * n..(i + 1) * n];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = b.row(k);
            for j in 0..n {
                c_row[j] += aik * b_row[j];
            }
        }
    }
    c
}

/// `C = A^T * B` for `A (k x m)`, `B (k x n)`; result is `m x n`.
pub fn matmul_at_b(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(
        a.rows, b.rows,
        "matmul_at_b: leading dimensions differ ({} vs {})",
        a.rows, b.rows
    );
    let mut c = Matrix::zeros(a.cols, b.cols);
    let n = b.cols;
    for k in 0..a.rows {
        let a_row = a.row(k);
        let b_row = b.row(k);
        for (i, &aki) in a_row.iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let c_row = &mut c.data[i * n..(i + 1) * n];
            for j in 0..n {
                c_row[j] += aki * b_row[j];
            }
        }
    }
    c
}

/// `C = A * B^T` for `A (m x k)`, `B (n x k)`; result is `m x n`.
pub fn matmul_a_bt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(
        a.cols, b.cols,
        "matmul_a_bt: trailing dimensions differ ({} vs {})",
        a.cols, b.cols
    );
    let mut c = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        let c_row = c.row_mut(i);
        for (j, c_ij) in c_row.iter_mut().enumerate() {
            let b_row = b.row(j);
            let mut acc = 0.0;
            for (x, y) in a_row.iter().zip(b_row.iter()) {
                acc += x * y;
            }
            *c_ij = acc;
        }
    }
    c
}

/// Adds a bias row-vector to every row of `m`.
pub fn add_row_bias(m: &mut Matrix, bias: &[f64]) {
    assert_eq!(m.cols, bias.len(), "add_row_bias: width mismatch");
    for i in 0..m.rows {
        for (x, b) in m.row_mut(i).iter_mut().zip(bias.iter()) {
            *x += b;
        }
    }
}

/// Column sums of `m` as a vector of length `cols`.
pub fn col_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    for i in 0..m.rows {
        for (o, x) in out.iter_mut().zip(m.row(i).iter()) {
            *o += x;
        }
    }
    out
}

pub(crate) fn check_len(
    op: &'static str,
    expected: usize,
    actual: usize,
) -> Result<(), CoreError> {
    if expected != actual {
        return Err(CoreError::shape(
            op,
            format!("length {expected}"),
            format!("length {actual}"),
        ));
    }
    Ok(())
}
