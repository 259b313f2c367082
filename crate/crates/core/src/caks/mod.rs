//! Computation-aware RTS smoother, interpolation at off-grid times, and posterior sampling.

mod interpolate;
mod sample;

use nalgebra::{DMatrix, DVector};

use crate::cakf::CakfTrace;
use crate::dense::{hcat, row_sq_norms};
use crate::linops::{truncate_downdate, LinearMap};
use crate::models::DiscreteLgssm;
use crate::Result;

pub use interpolate::{caks_interpolate, cakf_interpolate, InterpolatedState};
pub use sample::{posterior_sample, posterior_sample_with, PosteriorSample};

/// Rank bound for the backward carrier `Ŵˢ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherBound {
    /// Reuse the bound the filter applied at each step.
    FilterSchedule,
    Unbounded,
    Fixed(usize),
}

#[derive(Debug, Clone)]
pub struct CaksResult {
    pub means: Vec<DVector<f64>>,
    /// `M̂ˢ_k` with smoothed covariance `Σ_k − M̂ˢ_k (M̂ˢ_k)ᵀ`.
    pub factors: Vec<DMatrix<f64>>,
    pub w_vec: Vec<DVector<f64>>,
    pub w_mat: Vec<DMatrix<f64>>,
}

impl CaksResult {
    pub fn variances(&self, model: &DiscreteLgssm, k: usize) -> DVector<f64> {
        model.marginal_covs[k].diagonal() - row_sq_norms(&self.factors[k])
    }
}

/// `(Σ − M Mᵀ) X`.
pub(crate) fn downdated_apply(sigma: &dyn LinearMap, m: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = sigma.apply(x);
    if m.ncols() > 0 && x.ncols() > 0 {
        let inner = m.tr_mul(x);
        out.gemm(-1.0, m, &inner, 1.0);
    }
    out
}

pub(crate) fn as_col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// `(I − Ŵ Ŵᵀ P̂⁻) X` for the step's update carriers.
pub(crate) fn carry(
    w_mat: &DMatrix<f64>,
    sigma: &dyn LinearMap,
    factor_pred: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> DMatrix<f64> {
    if w_mat.ncols() == 0 || x.ncols() == 0 {
        return x.clone();
    }
    let p = downdated_apply(sigma, factor_pred, x);
    x - w_mat * w_mat.tr_mul(&p)
}

/// Backward pass over a filter trace.
pub fn caks_smooth(trace: &CakfTrace, model: &DiscreteLgssm, bound: SmootherBound) -> Result<CaksResult> {
    let n = trace.steps.len();
    let d = model.dim;
    let local = |k: usize| match &trace.steps[k].update {
        Some(u) => (u.w.clone(), u.w_mat.clone()),
        None => (DVector::zeros(d), DMatrix::zeros(d, 0)),
    };
    let bound_at = |k: usize| match bound {
        SmootherBound::FilterSchedule => trace.steps[k].rank_bound,
        SmootherBound::Unbounded => None,
        SmootherBound::Fixed(r) => Some(r),
    };
    let mut means = vec![trace.steps[n - 1].mean.clone(); n];
    let mut factors = vec![trace.steps[n - 1].factor.clone(); n];
    let mut w_vec = vec![DVector::zeros(d); n];
    let mut w_mat = vec![DMatrix::zeros(d, 0); n];
    let (wl, wm) = local(n - 1);
    w_vec[n - 1] = wl;
    w_mat[n - 1] = wm;
    for k in (0..n - 1).rev() {
        let step = &trace.steps[k];
        let sigma = model.marginal_covs[k].as_ref();
        let a = model.transitions[k].a.as_ref();
        let at_w = a.adjoint(&as_col(&w_vec[k + 1]));
        let at_wm = a.adjoint(&w_mat[k + 1]);
        let both = hcat(&at_w, &at_wm);
        let p_both = downdated_apply(sigma, &step.factor, &both);
        means[k] = &step.mean + p_both.column(0);
        factors[k] = hcat(&step.factor, &p_both.columns(1, at_wm.ncols()).into_owned());
        let (wl, wm) = local(k);
        let carried = carry(&wm, sigma, &step.factor_pred, &both);
        w_vec[k] = wl + carried.column(0);
        let full = hcat(&wm, &carried.columns(1, at_wm.ncols()).into_owned());
        w_mat[k] = match bound_at(k) {
            Some(b) => truncate_downdate(&full, b).kept,
            None => full,
        };
    }
    Ok(CaksResult {
        means,
        factors,
        w_vec,
        w_mat,
    })
}
