//! Matrix-free linear operators.
//!
//! A [`LinearMap`] is only known through its action on blocks of vectors. Concrete species
//! (dense, diagonal, Kronecker, kernel Gramian, low-rank downdate, ...) live in [`maps`];
//! [`truncate`] holds the SVD truncation of downdate factors and [`lanczos`] the Lanczos
//! square-root approximation.

pub mod instrument;
pub mod lanczos;
pub mod maps;
pub mod truncate;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub use lanczos::{lanczos_lsqrt, LanczosSqrt};
pub use maps::{
    compose, downdate, kron, scaled, sum, transpose, ComposeMap, DenseMap, DiagonalMap,
    DowndateMap, GramMap, IdentityMap, KroneckerMap, LazySqrtMap, LowRankMap, PointKernel, PointSet,
    ScaledIdentityMap, ScaledMap, SelectionMap, SumMap, TransposeMap, ZeroMap,
};
pub use truncate::{truncate_downdate, DowndateFactor, Truncation};

/// Default number of right-hand sides / rows generated per block in lazy operators.
pub const DEFAULT_BLOCK: usize = 32;

/// A linear map `R^cols -> R^rows` known through products with blocks of vectors.
pub trait LinearMap: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `self · x` for a `cols × b` block. Shapes are checked by [`LinearMap::apply`].
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64>;

    /// `selfᵀ · x` for a `rows × b` block.
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64>;

    fn name(&self) -> &'static str {
        "linear map"
    }

    /// Leading diagonal. The default probes with unit vectors in blocks.
    fn diagonal(&self) -> DVector<f64> {
        probe_diagonal(self)
    }

    /// Dense materialization. Reported to [`instrument`].
    fn to_dense(&self) -> DMatrix<f64> {
        instrument::record_dense(self.nrows(), self.ncols());
        self.apply_block(&DMatrix::identity(self.ncols(), self.ncols()))
    }

    fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    /// Checked block product.
    fn try_apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.ncols() {
            return Err(Error::DimensionMismatch {
                context: self.name(),
                expected: self.ncols(),
                got: x.nrows(),
            });
        }
        Ok(self.apply_block(x))
    }

    /// Checked adjoint block product.
    fn try_adjoint(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.nrows() {
            return Err(Error::DimensionMismatch {
                context: self.name(),
                expected: self.nrows(),
                got: x.nrows(),
            });
        }
        Ok(self.adjoint_block(x))
    }

    /// Block product; a shape mismatch is a contract violation and panics.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.try_apply(x).unwrap_or_else(|e| panic!("{e}"))
    }

    fn adjoint(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.try_adjoint(x).unwrap_or_else(|e| panic!("{e}"))
    }

    fn apply_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let out = self.apply(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        DVector::from_column_slice(out.as_slice())
    }

    fn adjoint_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        let out = self.adjoint(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()));
        DVector::from_column_slice(out.as_slice())
    }
}

/// Leading diagonal of `op` from products with blocks of unit vectors.
pub fn probe_diagonal<T: LinearMap + ?Sized>(op: &T) -> DVector<f64> {
    let n = op.nrows().min(op.ncols());
    let mut diag = DVector::zeros(n);
    let mut start = 0;
    while start < n {
        let width = DEFAULT_BLOCK.min(n - start);
        let mut probe = DMatrix::zeros(op.ncols(), width);
        for j in 0..width {
            probe[(start + j, j)] = 1.0;
        }
        let out = op.apply_block(&probe);
        for j in 0..width {
            diag[start + j] = out[(start + j, j)];
        }
        start += width;
    }
    diag
}

/// Shared handle to an immutable operator.
pub type OpRef = Arc<dyn LinearMap>;

impl fmt::Debug for dyn LinearMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}x{})", self.name(), self.nrows(), self.ncols())
    }
}

/// Checked `op · v`.
pub fn apply(op: &dyn LinearMap, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    op.try_apply(v)
}

pub fn dense(m: DMatrix<f64>) -> OpRef {
    Arc::new(DenseMap::new(m))
}

pub fn identity(n: usize) -> OpRef {
    Arc::new(IdentityMap::new(n))
}
