//! Small dense linear-algebra helpers shared by the reference and projected paths.

use nalgebra::{linalg::Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::linops::instrument;
use crate::{Error, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Symmetric square root `L` with `L Lᵀ = m` for a PSD matrix; negative eigenvalues are clipped.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    instrument::record_dense(m.nrows(), m.ncols());
    let (values, vectors) = sorted_eigen(m);
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| {
        vectors[(r, c)] * values[c].max(0.0).sqrt()
    })
}

/// Pseudo-inverse left square root of a symmetric PSD matrix.
///
/// Returns `V` with `V Vᵀ = G†`, where eigenvalues below `rel_cutoff · λ_max` are treated as zero,
/// together with a flag telling whether any eigenvalue was discarded.
pub fn pinv_lsqrt(g: &DMatrix<f64>, rel_cutoff: f64) -> (DMatrix<f64>, bool) {
    let n = g.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let (values, vectors) = sorted_eigen(g);
    let lmax = values[0].max(0.0);
    let keep = values
        .iter()
        .take_while(|&&v| lmax > 0.0 && v > rel_cutoff * lmax)
        .count();
    let v = DMatrix::from_fn(n, keep, |r, c| vectors[(r, c)] / values[c].sqrt());
    (v, keep < n)
}

/// Cholesky factorization with a single jitter retry of `1e-10 · mean(diag)`.
pub fn cholesky_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let sym = symmetrize(m);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Some(c);
    }
    let n = sym.nrows().max(1);
    let mean_diag = sym.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let jitter = 1e-10 * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut j = sym;
    for i in 0..j.nrows() {
        j[(i, i)] += jitter;
    }
    Cholesky::new(j)
}

/// Inverse of an SPD matrix via Cholesky with jitter fallback.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    cholesky_jitter(m)
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Maximum absolute entry of `a − b` divided by the maximum absolute entry of `b` (or 1 if tiny).
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let scale = b.amax().max(1e-300);
    let diff = (a - b).amax();
    if b.amax() < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let scale = b.amax();
    let diff = (a - b).amax();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Horizontal concatenation of two blocks with equal row counts.
pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "hcat row mismatch");
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Row-wise sum of squares, i.e. `diag(M Mᵀ)`.
pub fn row_sq_norms(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.norm_squared()))
}
