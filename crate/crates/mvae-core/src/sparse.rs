//! Compressed sparse row matrices over `f64`.
//!
//! Matrices are assembled from triplets through [`SparseBuilder`] and become
//! immutable once finalized. Products that must survive exact identity checks
//! (row sums, sparse-sparse products) accumulate with Neumaier compensation so
//! the result is the correctly rounded sum of the terms.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("triplet ({row}, {col}) out of bounds for a {rows}x{cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("duplicate triplet at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: matrix is {expected}, operand is {got}")]
    DimensionMismatch { expected: String, got: String },
}

/// Triplet accumulator; `finalize` produces the immutable CSR form.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    rows: usize,
    cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl SparseBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            triplets: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.triplets.push((row, col, value));
    }

    /// Sorts triplets, rejects duplicates and out-of-range indices, drops
    /// exact zeros, and freezes the matrix.
    pub fn finalize(mut self) -> Result<SparseMatrix, SparseError> {
        for &(r, c, v) in &self.triplets {
            if r >= self.rows || c >= self.cols {
                return Err(SparseError::IndexOutOfBounds {
                    row: r,
                    col: c,
                    rows: self.rows,
                    cols: self.cols,
                });
            }
            if !v.is_finite() {
                return Err(SparseError::NonFinite { row: r, col: c });
            }
        }
        self.triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in self.triplets.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(SparseError::DuplicateEntry {
                    row: w[0].0,
                    col: w[0].1,
                });
            }
        }
        let mut row_ptr = vec![0usize; self.rows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &(r, c, v) in &self.triplets {
            if v == 0.0 {
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..self.rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        })
    }
}

/// Immutable CSR matrix with column indices sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of one row as parallel (column, value) slices.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, SparseError> {
        if x.len() != self.cols {
            return Err(self.dim_mismatch(format!("vector of length {}", x.len())));
        }
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let mut acc = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        Ok(y)
    }

    /// `A · X` for dense row-major `X`.
    pub fn matmul_dense(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, SparseError> {
        if x.nrows() != self.cols {
            return Err(self.dim_mismatch(format!("{}x{} dense", x.nrows(), x.ncols())));
        }
        let mut y = Array2::zeros((self.rows, x.ncols()));
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let mut out = y.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.scaled_add(v, &x.row(c));
            }
        }
        Ok(y)
    }

    /// `Aᵀ · X` without materializing the transpose.
    pub fn tr_matmul_dense(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, SparseError> {
        if x.nrows() != self.rows {
            return Err(self.dim_mismatch(format!("{}x{} dense", x.nrows(), x.ncols())));
        }
        let mut y = Array2::zeros((self.cols, x.ncols()));
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let xr = x.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y.row_mut(c).scaled_add(v, &xr);
            }
        }
        Ok(y)
    }

    /// Sparse-sparse product with compensated accumulation per output entry.
    pub fn spmm(&self, other: &SparseMatrix) -> Result<SparseMatrix, SparseError> {
        if other.rows != self.cols {
            return Err(self.dim_mismatch(format!("{}x{} sparse", other.rows, other.cols)));
        }
        let mut builder = SparseBuilder::new(self.rows, other.cols);
        for r in 0..self.rows {
            let mut acc: BTreeMap<usize, Neumaier> = BTreeMap::new();
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (bcols, bvals) = other.row(k);
                for (&j, &b) in bcols.iter().zip(bvals) {
                    acc.entry(j).or_default().add(a * b);
                }
            }
            for (j, sum) in acc {
                builder.push(r, j, sum.value());
            }
        }
        builder.finalize()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut builder = SparseBuilder::new(self.cols, self.rows);
        for (r, c, v) in self.triplets() {
            builder.push(c, r, v);
        }
        builder.finalize().expect("transpose of a valid matrix")
    }

    /// Compensated row sums.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                let mut acc = Neumaier::default();
                for &v in self.row(r).1 {
                    acc.add(v);
                }
                acc.value()
            })
            .collect()
    }

    /// True when the stored triplets equal the transposed triplets bit for bit.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.rows, self.cols));
        for (r, c, v) in self.triplets() {
            d[[r, c]] = v;
        }
        d
    }

    fn dim_mismatch(&self, got: String) -> SparseError {
        SparseError::DimensionMismatch {
            expected: format!("{}x{}", self.rows, self.cols),
            got,
        }
    }
}

/// Neumaier-compensated accumulator: `value()` is the correctly rounded sum
/// for the magnitudes handled here.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SparseMatrix {
        let mut b = SparseBuilder::new(2, 3);
        b.push(0, 0, 1.0);
        b.push(0, 2, 2.0);
        b.push(1, 1, -3.0);
        b.finalize().unwrap()
    }

    #[test]
    fn builder_rejects_out_of_range() {
        let mut b = SparseBuilder::new(2, 2);
        b.push(2, 0, 1.0);
        assert!(matches!(
            b.finalize(),
            Err(SparseError::IndexOutOfBounds { row: 2, .. })
        ));
    }

    #[test]
    fn builder_rejects_duplicates() {
        let mut b = SparseBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(0, 1, 2.0);
        assert!(matches!(
            b.finalize(),
            Err(SparseError::DuplicateEntry { row: 0, col: 1 })
        ));
    }

    #[test]
    fn zeros_are_dropped() {
        let mut b = SparseBuilder::new(2, 2);
        b.push(0, 0, 0.0);
        b.push(1, 1, 5.0);
        let m = b.finalize().unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(1, 1), 5.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let m = small();
        let y = m.matvec(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![7.0, -6.0]);
    }

    #[test]
    fn matvec_dimension_error() {
        let m = small();
        assert!(m.matvec(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn transpose_round_trip() {
        let m = small();
        assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn spmm_identity() {
        let m = small();
        let i3 = SparseMatrix::identity(3);
        assert_eq!(m.spmm(&i3).unwrap(), m);
    }

    #[test]
    fn dense_products_agree_with_transpose() {
        let m = small();
        let x = ndarray::arr2(&[[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]]);
        let y = m.matmul_dense(x.view()).unwrap();
        assert_eq!(y, ndarray::arr2(&[[7.0, 16.0], [-6.0, -15.0]]));
        let xt = ndarray::arr2(&[[1.0], [2.0]]);
        let z = m.tr_matmul_dense(xt.view()).unwrap();
        assert_eq!(z, m.transpose().matmul_dense(xt.view()).unwrap());
    }

    // Compensated accumulation returns the correctly rounded sum of k copies
    // of fl(1/k). That is exactly 1.0 for every k < 49; for a sparse set of
    // larger k (first 49) the true sum k*fl(1/k) itself rounds to 1 - 2^-53,
    // so no summation algorithm can do better than one ulp.
    #[test]
    fn compensated_reciprocal_sums_hit_one() {
        for k in 1usize..=48 {
            let a = 1.0 / k as f64;
            let mut acc = Neumaier::default();
            for _ in 0..k {
                acc.add(a);
            }
            assert_eq!(acc.value(), 1.0, "k = {k}");
        }
        for k in 49usize..=4096 {
            let a = 1.0 / k as f64;
            let mut acc = Neumaier::default();
            for _ in 0..k {
                acc.add(a);
            }
            assert!((acc.value() - 1.0).abs() <= f64::EPSILON, "k = {k}");
        }
    }
}
