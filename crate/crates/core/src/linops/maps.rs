//! Operator species.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{instrument, LinearMap, OpRef, DEFAULT_BLOCK};
use crate::dense::{psd_sqrt, row_sq_norms};

/// Dense matrix wrapper.
#[derive(Debug, Clone)]
pub struct DenseMap {
    pub matrix: DMatrix<f64>,
}

impl DenseMap {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }
}

impl LinearMap for DenseMap {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }
    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * x
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.matrix.tr_mul(x)
    }
    fn diagonal(&self) -> DVector<f64> {
        let n = self.matrix.nrows().min(self.matrix.ncols());
        DVector::from_fn(n, |i, _| self.matrix[(i, i)])
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.clone()
    }
    fn name(&self) -> &'static str {
        "dense"
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityMap {
    n: usize,
}

impl IdentityMap {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl LinearMap for IdentityMap {
    fn nrows(&self) -> usize {
        self.n
    }
    fn ncols(&self) -> usize {
        self.n
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.clone()
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.clone()
    }
    fn diagonal(&self) -> DVector<f64> {
        DVector::from_element(self.n, 1.0)
    }
    fn name(&self) -> &'static str {
        "identity"
    }
}

/// `s · I`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledIdentityMap {
    pub n: usize,
    pub scale: f64,
}

impl LinearMap for ScaledIdentityMap {
    fn nrows(&self) -> usize {
        self.n
    }
    fn ncols(&self) -> usize {
        self.n
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * self.scale
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * self.scale
    }
    fn diagonal(&self) -> DVector<f64> {
        DVector::from_element(self.n, self.scale)
    }
    fn name(&self) -> &'static str {
        "scaled identity"
    }
}

#[derive(Debug, Clone)]
pub struct DiagonalMap {
    pub diag: DVector<f64>,
}

impl LinearMap for DiagonalMap {
    fn nrows(&self) -> usize {
        self.diag.len()
    }
    fn ncols(&self) -> usize {
        self.diag.len()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= self.diag[i];
        }
        out
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_block(x)
    }
    fn diagonal(&self) -> DVector<f64> {
        self.diag.clone()
    }
    fn name(&self) -> &'static str {
        "diagonal"
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroMap {
    pub rows: usize,
    pub cols: usize,
}

impl LinearMap for ZeroMap {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.rows, x.ncols())
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.cols, x.ncols())
    }
    fn diagonal(&self) -> DVector<f64> {
        DVector::zeros(self.rows.min(self.cols))
    }
    fn name(&self) -> &'static str {
        "zero"
    }
}

/// Row selection `x ↦ (x[idx[0]], x[idx[1]], ...)`.
#[derive(Debug, Clone)]
pub struct SelectionMap {
    pub indices: Vec<usize>,
    pub dim: usize,
}

impl SelectionMap {
    pub fn new(indices: Vec<usize>, dim: usize) -> Self {
        assert!(indices.iter().all(|&i| i < dim), "selection index out of range");
        Self { indices, dim }
    }
}

impl LinearMap for SelectionMap {
    fn nrows(&self) -> usize {
        self.indices.len()
    }
    fn ncols(&self) -> usize {
        self.dim
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.indices.len(), x.ncols(), |r, c| x[(self.indices[r], c)])
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, x.ncols());
        for (r, &i) in self.indices.iter().enumerate() {
            for c in 0..x.ncols() {
                out[(i, c)] += x[(r, c)];
            }
        }
        out
    }
    fn name(&self) -> &'static str {
        "selection"
    }
}

/// `left · right`.
pub struct ComposeMap {
    pub left: OpRef,
    pub right: OpRef,
}

pub fn compose(left: OpRef, right: OpRef) -> OpRef {
    assert_eq!(left.ncols(), right.nrows(), "compose shape mismatch");
    Arc::new(ComposeMap { left, right })
}

impl LinearMap for ComposeMap {
    fn nrows(&self) -> usize {
        self.left.nrows()
    }
    fn ncols(&self) -> usize {
        self.right.ncols()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.left.apply_block(&self.right.apply_block(x))
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.right.adjoint_block(&self.left.adjoint_block(x))
    }
    fn name(&self) -> &'static str {
        "composition"
    }
}

/// Sum of equally shaped operators.
pub struct SumMap {
    pub terms: Vec<OpRef>,
}

pub fn sum(terms: Vec<OpRef>) -> OpRef {
    assert!(!terms.is_empty(), "empty operator sum");
    let shape = terms[0].shape();
    assert!(terms.iter().all(|t| t.shape() == shape), "sum shape mismatch");
    Arc::new(SumMap { terms })
}

impl LinearMap for SumMap {
    fn nrows(&self) -> usize {
        self.terms[0].nrows()
    }
    fn ncols(&self) -> usize {
        self.terms[0].ncols()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.terms[0].apply_block(x);
        for t in &self.terms[1..] {
            out += t.apply_block(x);
        }
        out
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.terms[0].adjoint_block(x);
        for t in &self.terms[1..] {
            out += t.adjoint_block(x);
        }
        out
    }
    fn diagonal(&self) -> DVector<f64> {
        let mut d = self.terms[0].diagonal();
        for t in &self.terms[1..] {
            d += t.diagonal();
        }
        d
    }
    fn name(&self) -> &'static str {
        "sum"
    }
}

pub struct ScaledMap {
    pub op: OpRef,
    pub scale: f64,
}

pub fn scaled(op: OpRef, scale: f64) -> OpRef {
    Arc::new(ScaledMap { op, scale })
}

impl LinearMap for ScaledMap {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }
    fn ncols(&self) -> usize {
        self.op.ncols()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.op.apply_block(x) * self.scale
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.op.adjoint_block(x) * self.scale
    }
    fn diagonal(&self) -> DVector<f64> {
        self.op.diagonal() * self.scale
    }
    fn name(&self) -> &'static str {
        "scaled"
    }
}

pub struct TransposeMap {
    pub op: OpRef,
}

pub fn transpose(op: OpRef) -> OpRef {
    Arc::new(TransposeMap { op })
}

impl LinearMap for TransposeMap {
    fn nrows(&self) -> usize {
        self.op.ncols()
    }
    fn ncols(&self) -> usize {
        self.op.nrows()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.op.adjoint_block(x)
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.op.apply_block(x)
    }
    fn diagonal(&self) -> DVector<f64> {
        self.op.diagonal()
    }
    fn name(&self) -> &'static str {
        "transpose"
    }
}

/// `base − M Mᵀ` for a tall factor `M`.
pub struct DowndateMap {
    pub base: OpRef,
    pub factor: DMatrix<f64>,
}

pub fn downdate(base: OpRef, factor: DMatrix<f64>) -> OpRef {
    assert_eq!(base.nrows(), base.ncols(), "downdate base must be square");
    assert_eq!(base.nrows(), factor.nrows(), "downdate factor row mismatch");
    Arc::new(DowndateMap { base, factor })
}

impl LinearMap for DowndateMap {
    fn nrows(&self) -> usize {
        self.base.nrows()
    }
    fn ncols(&self) -> usize {
        self.base.ncols()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.base.apply_block(x);
        if self.factor.ncols() > 0 {
            let inner = self.factor.tr_mul(x);
            out.gemm(-1.0, &self.factor, &inner, 1.0);
        }
        out
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.base.adjoint_block(x);
        if self.factor.ncols() > 0 {
            let inner = self.factor.tr_mul(x);
            out.gemm(-1.0, &self.factor, &inner, 1.0);
        }
        out
    }
    fn diagonal(&self) -> DVector<f64> {
        self.base.diagonal() - row_sq_norms(&self.factor)
    }
    fn name(&self) -> &'static str {
        "downdate"
    }
}

/// `U Uᵀ` for a tall factor `U`.
pub struct LowRankMap {
    pub factor: DMatrix<f64>,
}

impl LinearMap for LowRankMap {
    fn nrows(&self) -> usize {
        self.factor.nrows()
    }
    fn ncols(&self) -> usize {
        self.factor.nrows()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.factor * self.factor.tr_mul(x)
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_block(x)
    }
    fn diagonal(&self) -> DVector<f64> {
        row_sq_norms(&self.factor)
    }
    fn name(&self) -> &'static str {
        "low rank"
    }
}

/// `left ⊗ right`, with composite index `i · right.nrows() + j`.
pub struct KroneckerMap {
    pub left: OpRef,
    pub right: OpRef,
}

pub fn kron(left: OpRef, right: OpRef) -> OpRef {
    Arc::new(KroneckerMap { left, right })
}

/// `(L ⊗ R) x` per column, batching all columns through `R` and then `L`.
fn kron_apply(
    x: &DMatrix<f64>,
    l: (usize, usize),
    r: (usize, usize),
    apply_l: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    apply_r: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
) -> DMatrix<f64> {
    let (p, q) = l;
    let (m, n) = r;
    let b = x.ncols();
    // Column c of x, read column-major as n×q, is X_cᵀ where X_c[i][j] = x[i·n + j].
    let mut stacked = DMatrix::zeros(n, q * b);
    for c in 0..b {
        stacked
            .columns_mut(c * q, q)
            .copy_from_slice(x.column(c).as_slice());
    }
    let z = apply_r(&stacked); // m × (q b): block c is R X_cᵀ
    let mut zt = DMatrix::zeros(q, m * b);
    for c in 0..b {
        zt.columns_mut(c * m, m)
            .copy_from(&z.columns(c * q, q).transpose());
    }
    let w = apply_l(&zt); // p × (m b): block c is L X_c Rᵀ
    let mut out = DMatrix::zeros(p * m, b);
    for c in 0..b {
        let block = w.columns(c * m, m);
        let mut col = out.column_mut(c);
        for i in 0..p {
            for j in 0..m {
                col[i * m + j] = block[(i, j)];
            }
        }
    }
    out
}

impl LinearMap for KroneckerMap {
    fn nrows(&self) -> usize {
        self.left.nrows() * self.right.nrows()
    }
    fn ncols(&self) -> usize {
        self.left.ncols() * self.right.ncols()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        kron_apply(
            x,
            self.left.shape(),
            self.right.shape(),
            |v| self.left.apply_block(v),
            |v| self.right.apply_block(v),
        )
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (p, q) = self.left.shape();
        let (m, n) = self.right.shape();
        kron_apply(
            x,
            (q, p),
            (n, m),
            |v| self.left.adjoint_block(v),
            |v| self.right.adjoint_block(v),
        )
    }
    fn diagonal(&self) -> DVector<f64> {
        if self.left.nrows() != self.left.ncols() || self.right.nrows() != self.right.ncols() {
            return super::probe_diagonal(self);
        }
        let dl = self.left.diagonal();
        let dr = self.right.diagonal();
        DVector::from_iterator(
            dl.len() * dr.len(),
            dl.iter().flat_map(|a| dr.iter().map(move |b| a * b)),
        )
    }
    fn name(&self) -> &'static str {
        "kronecker"
    }
}

/// A covariance function over fixed-dimensional points.
pub trait PointKernel: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
}

/// Points stored row-major, `dim` coordinates each.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim > 0, "point dimension must be positive");
        assert_eq!(coords.len() % dim, 0, "coordinate count not a multiple of dim");
        Self { dim, coords }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(1, |r| r.len());
        Self::new(dim, rows.iter().flatten().copied().collect())
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, idx: &[usize]) -> PointSet {
        PointSet::new(
            self.dim,
            idx.iter().flat_map(|&i| self.point(i).iter().copied()).collect(),
        )
    }

    /// Index of the first repeated point, if any.
    pub fn first_duplicate(&self) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        order
            .windows(2)
            .find(|w| self.point(w[0]) == self.point(w[1]))
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }
}

/// Lazy kernel Gramian `K(rows, cols)`; rows are generated on demand in blocks.
pub struct GramMap {
    pub kernel: Arc<dyn PointKernel>,
    pub rows: Arc<PointSet>,
    pub cols: Arc<PointSet>,
    pub block: usize,
}

impl GramMap {
    pub fn new(kernel: Arc<dyn PointKernel>, rows: Arc<PointSet>, cols: Arc<PointSet>) -> Self {
        Self {
            kernel,
            rows,
            cols,
            block: DEFAULT_BLOCK,
        }
    }

    pub fn with_block(mut self, block: usize) -> Self {
        self.block = block.max(1);
        self
    }

    fn product(&self, out_pts: &PointSet, in_pts: &PointSet, x: &DMatrix<f64>) -> DMatrix<f64> {
        let nout = out_pts.len();
        let nin = in_pts.len();
        let b = x.ncols();
        let blocks: Vec<(usize, DMatrix<f64>)> = (0..nout)
            .step_by(self.block)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let h = self.block.min(nout - start);
                let kblock = DMatrix::from_fn(h, nin, |i, j| {
                    self.kernel.eval(out_pts.point(start + i), in_pts.point(j))
                });
                (start, kblock * x)
            })
            .collect();
        let mut out = DMatrix::zeros(nout, b);
        for (start, part) in blocks {
            out.rows_mut(start, part.nrows()).copy_from(&part);
        }
        out
    }

    /// Dense Gramian, reported to the instrumentation layer.
    pub fn materialize(&self) -> DMatrix<f64> {
        instrument::record_dense(self.rows.len(), self.cols.len());
        DMatrix::from_fn(self.rows.len(), self.cols.len(), |i, j| {
            self.kernel.eval(self.rows.point(i), self.cols.point(j))
        })
    }
}

impl LinearMap for GramMap {
    fn nrows(&self) -> usize {
        self.rows.len()
    }
    fn ncols(&self) -> usize {
        self.cols.len()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.product(&self.rows, &self.cols, x)
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.product(&self.cols, &self.rows, x)
    }
    fn diagonal(&self) -> DVector<f64> {
        let n = self.rows.len().min(self.cols.len());
        DVector::from_fn(n, |i, _| {
            self.kernel.eval(self.rows.point(i), self.cols.point(i))
        })
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.materialize()
    }
    fn name(&self) -> &'static str {
        "kernel gram"
    }
}

/// Symmetric PSD square root `L` (with `L Lᵀ = op`) computed once on first use.
pub struct LazySqrtMap {
    pub op: OpRef,
    cache: OnceLock<(DMatrix<f64>, f64)>,
}

impl LazySqrtMap {
    pub fn new(op: OpRef) -> Self {
        assert_eq!(op.nrows(), op.ncols(), "square root of a non-square operator");
        Self {
            op,
            cache: OnceLock::new(),
        }
    }

    fn factor(&self) -> &DMatrix<f64> {
        &self
            .cache
            .get_or_init(|| {
                let start = Instant::now();
                let l = psd_sqrt(&self.op.to_dense());
                (l, start.elapsed().as_secs_f64())
            })
            .0
    }

    /// Seconds spent computing the factor, if it has been computed.
    pub fn compute_seconds(&self) -> Option<f64> {
        self.cache.get().map(|c| c.1)
    }
}

impl LinearMap for LazySqrtMap {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }
    fn ncols(&self) -> usize {
        self.op.ncols()
    }
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor() * x
    }
    fn adjoint_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor().tr_mul(x)
    }
    fn name(&self) -> &'static str {
        "lazy square root"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{dense, identity};

    #[test]
    fn identity_is_identity() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(identity(3).apply_vec(&v), v);
    }

    #[test]
    fn downdate_subtracts_outer_product() {
        let m = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let op = downdate(identity(3), m);
        let out = op.apply_vec(&DVector::from_element(3, 1.0));
        assert_eq!(out.as_slice(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn kronecker_of_rectangular_factors() {
        let a = DMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64 + 1.0);
        let b = DMatrix::from_fn(4, 2, |i, j| (i as f64 - j as f64) * 0.5 + 0.1);
        let op = kron(dense(a.clone()), dense(b.clone()));
        let full = a.kronecker(&b);
        let x = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        assert!((op.apply(&x) - &full * &x).amax() < 1e-12);
        let y = DMatrix::from_fn(8, 2, |i, j| ((i * 5 + j) % 3) as f64 - 1.0);
        assert!((op.adjoint(&y) - full.transpose() * &y).amax() < 1e-12);
        let lead = DVector::from_fn(6, |i, _| full[(i, i)]);
        assert!((op.diagonal() - lead).amax() < 1e-12);
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn apply_checks_shape() {
        identity(3).apply(&DMatrix::zeros(2, 1));
    }

    #[test]
    fn selection_adjoint_scatters() {
        let s = SelectionMap::new(vec![2, 0, 2], 4);
        let y = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(s.adjoint(&y).as_slice(), &[2.0, 0.0, 4.0, 0.0]);
    }

    #[test]
    fn duplicate_points_are_found() {
        let p = PointSet::new(2, vec![0.0, 1.0, 2.0, 3.0, 0.0, 1.0]);
        assert_eq!(p.first_duplicate(), Some((0, 2)));
        assert_eq!(PointSet::new(1, vec![0.0, 1.0]).first_duplicate(), None);
    }
}
