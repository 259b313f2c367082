//! Lanczos approximation of a left square root of a symmetric PSD operator.

use nalgebra::{DMatrix, DVector};

use super::LinearMap;
use crate::dense::sorted_eigen;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct LanczosSqrt {
    /// `D × k` factor with `L Lᵀ ≈ op`; `k < rank` only on breakdown.
    pub factor: DMatrix<f64>,
    pub breakdown: bool,
}

/// Rank-`rank` Lanczos square root `L = Q T^{1/2}` with full reorthogonalization.
///
/// The Krylov space is started from `op · seed`, so the basis lies in the range of `op`; a
/// rank-`k` operator is then recovered exactly with `k` steps.
pub fn lanczos_lsqrt(op: &dyn LinearMap, rank: usize, seed: &DVector<f64>) -> Result<LanczosSqrt> {
    let d = op.nrows();
    if op.ncols() != d {
        return Err(Error::invalid("lanczos_lsqrt needs a square operator"));
    }
    if rank == 0 || rank > d {
        return Err(Error::invalid(format!("lanczos rank {rank} outside [1, {d}]")));
    }
    if seed.len() != d {
        return Err(Error::DimensionMismatch {
            context: "lanczos seed",
            expected: d,
            got: seed.len(),
        });
    }
    let start = op.apply_vec(seed);
    let norm0 = start.norm();
    if !(norm0 > 0.0) || !norm0.is_finite() {
        return Ok(LanczosSqrt {
            factor: DMatrix::zeros(d, 0),
            breakdown: true,
        });
    }
    let mut basis: Vec<DVector<f64>> = vec![start / norm0];
    let mut alpha = Vec::with_capacity(rank);
    let mut beta: Vec<f64> = Vec::with_capacity(rank);
    let mut breakdown = false;
    let mut scale = 0.0f64;
    loop {
        let j = basis.len() - 1;
        let mut w = op.apply_vec(&basis[j]);
        let a = basis[j].dot(&w);
        alpha.push(a);
        scale = scale.max(a.abs());
        w.axpy(-a, &basis[j], 1.0);
        if j > 0 {
            w.axpy(-beta[j - 1], &basis[j - 1], 1.0);
        }
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        if basis.len() == rank {
            break;
        }
        let b = w.norm();
        if b <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            breakdown = true;
            break;
        }
        beta.push(b);
        basis.push(w / b);
    }
    let k = basis.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let (vals, vecs) = sorted_eigen(&t);
    let half = DMatrix::from_fn(k, k, |i, j| vecs[(i, j)] * vals[j].max(0.0).sqrt());
    let q = DMatrix::from_columns(&basis);
    Ok(LanczosSqrt {
        factor: q * half,
        breakdown,
    })
}
