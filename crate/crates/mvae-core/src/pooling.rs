//! Average pooling and de-pooling operators derived from contraction maps.
//!
//! Pooling averages the features of every fine vertex contracted into a
//! coarse vertex; de-pooling copies each coarse row back to all of its fine
//! members. Both are sparse linear maps, so their gradients are the
//! transposed applications.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::simplify::ContractionMap;
use crate::sparse::{SparseBuilder, SparseError, SparseMatrix};

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("coarse vertex {coarse} has no fine members (parent map not surjective)")]
    EmptyCluster { coarse: usize },
    #[error("parent index {parent} out of range for coarse count {coarse_count}")]
    ParentOutOfRange { parent: usize, coarse_count: usize },
    #[error("expected {expected} rows, got {got}")]
    RowMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// Row-stochastic averaging map `P` (coarse x fine) and its selection
/// counterpart `Dp` (fine x coarse) with `P · Dp = I`.
#[derive(Debug, Clone)]
pub struct PoolOperator {
    pub fine_count: usize,
    pub coarse_count: usize,
    pub cluster_members: Vec<Vec<usize>>,
    p: SparseMatrix,
    dp: SparseMatrix,
}

/// Builds the operators from the final parent assignment, so chained
/// contractions pool over every merged ancestor.
pub fn build_pool_operator(map: &ContractionMap) -> Result<PoolOperator, PoolError> {
    let mut cluster_members: Vec<Vec<usize>> = vec![Vec::new(); map.coarse_count];
    for (fine, &coarse) in map.parent.iter().enumerate() {
        if coarse >= map.coarse_count {
            return Err(PoolError::ParentOutOfRange {
                parent: coarse,
                coarse_count: map.coarse_count,
            });
        }
        cluster_members[coarse].push(fine);
    }
    let mut p = SparseBuilder::new(map.coarse_count, map.fine_count);
    let mut dp = SparseBuilder::new(map.fine_count, map.coarse_count);
    for (coarse, members) in cluster_members.iter().enumerate() {
        if members.is_empty() {
            return Err(PoolError::EmptyCluster { coarse });
        }
        let weight = 1.0 / members.len() as f64;
        for &fine in members {
            p.push(coarse, fine, weight);
            dp.push(fine, coarse, 1.0);
        }
    }
    Ok(PoolOperator {
        fine_count: map.fine_count,
        coarse_count: map.coarse_count,
        cluster_members,
        p: p.finalize()?,
        dp: dp.finalize()?,
    })
}

impl PoolOperator {
    pub fn averaging_matrix(&self) -> &SparseMatrix {
        &self.p
    }

    pub fn selection_matrix(&self) -> &SparseMatrix {
        &self.dp
    }

    /// `P · X`: per-cluster feature averages.
    pub fn pool(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, PoolError> {
        self.check_rows(x.nrows(), self.fine_count)?;
        Ok(self.p.matmul_dense(x)?)
    }

    /// `Dp · Y`: every fine vertex receives a copy of its parent's row.
    pub fn depool(&self, y: ArrayView2<'_, f64>) -> Result<Array2<f64>, PoolError> {
        self.check_rows(y.nrows(), self.coarse_count)?;
        Ok(self.dp.matmul_dense(y)?)
    }

    /// Gradient of [`pool`](Self::pool): `Pᵀ · G`.
    pub fn pool_backprop(&self, upstream: ArrayView2<'_, f64>) -> Result<Array2<f64>, PoolError> {
        self.check_rows(upstream.nrows(), self.coarse_count)?;
        Ok(self.p.tr_matmul_dense(upstream)?)
    }

    /// Gradient of [`depool`](Self::depool): `Dpᵀ · G`.
    pub fn depool_backprop(&self, upstream: ArrayView2<'_, f64>) -> Result<Array2<f64>, PoolError> {
        self.check_rows(upstream.nrows(), self.fine_count)?;
        Ok(self.dp.tr_matmul_dense(upstream)?)
    }

    fn check_rows(&self, got: usize, expected: usize) -> Result<(), PoolError> {
        if got != expected {
            return Err(PoolError::RowMismatch { expected, got });
        }
        Ok(())
    }
}
