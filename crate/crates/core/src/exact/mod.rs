//! Dense reference filtering and smoothing.
//!
//! These routines materialize every covariance and are meant for moderate state dimensions;
//! they refuse models above a configurable cap (default [`DEFAULT_DENSE_CAP`]).

mod interpolate;
mod sample;

use nalgebra::{DMatrix, DVector};

use crate::dense::{cholesky_jitter, hcat, symmetrize};
use crate::models::{DiscreteLgssm, ObservationData};
use crate::{Error, Result};

pub use interpolate::{interpolate, InterpolatedBeliefs};
pub use sample::{matheron_sample, matheron_sample_with};

pub const DEFAULT_DENSE_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

/// Update quantities of one observed step.
#[derive(Debug, Clone)]
pub struct UpdateCache {
    pub residual: DVector<f64>,
    pub innovation: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// `V` with `V Vᵀ = G⁻¹`.
    pub v: DMatrix<f64>,
    /// `W = Hᵀ V`.
    pub w_mat: DMatrix<f64>,
    /// `w = Hᵀ G⁻¹ r`.
    pub w_vec: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ExactStep {
    pub predicted: GaussianBelief,
    pub updated: GaussianBelief,
    pub update: Option<UpdateCache>,
    /// Downdate factors `M⁻_k` and `M_k` (downdate form only).
    pub factor_pred: Option<DMatrix<f64>>,
    pub factor: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct ExactFilterTrace {
    pub steps: Vec<ExactStep>,
}

impl ExactFilterTrace {
    pub fn means(&self) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| s.updated.mean.clone()).collect()
    }
}

/// Dense `(H, Λ, offset)` of one observation.
pub(crate) type DenseObs = (DMatrix<f64>, DMatrix<f64>, Option<DVector<f64>>);

/// Dense copies of all model pieces.
pub(crate) struct DenseModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
    pub q: Vec<DMatrix<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
    pub obs: Vec<Option<DenseObs>>,
}

impl DenseModel {
    pub fn new(model: &DiscreteLgssm, cap: usize) -> Result<Self> {
        model.check_dense_cap(cap)?;
        Ok(Self {
            a: model.transitions.iter().map(|t| t.a.to_dense()).collect(),
            b: model.transitions.iter().map(|t| t.b.clone()).collect(),
            q: model.transitions.iter().map(|t| t.q.to_dense()).collect(),
            sigma: model.marginal_covs.iter().map(|s| s.to_dense()).collect(),
            obs: model
                .observations
                .iter()
                .map(|o| {
                    o.as_ref()
                        .map(|o| (o.h.to_dense(), o.noise.to_dense(), o.offset.clone()))
                })
                .collect(),
        })
    }
}

fn update_cache(
    step: usize,
    h: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    offset: &Option<DVector<f64>>,
    y: &DVector<f64>,
    mean_pred: &DVector<f64>,
    cov_pred: &DMatrix<f64>,
) -> Result<UpdateCache> {
    let mut residual = y - h * mean_pred;
    if let Some(c) = offset {
        residual -= c;
    }
    let ph = cov_pred * h.transpose();
    let innovation = symmetrize(&(h * &ph + noise));
    let chol = cholesky_jitter(&innovation).ok_or(Error::SingularInnovation { step })?;
    let ginv_r = chol.solve(&residual);
    let gain = chol.solve(&ph.transpose()).transpose();
    let l = chol.l();
    let n = l.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::SingularInnovation { step })?;
    let v = linv.transpose();
    let w_mat = h.transpose() * &v;
    let w_vec = h.transpose() * ginv_r;
    Ok(UpdateCache {
        residual,
        innovation,
        gain,
        v,
        w_mat,
        w_vec,
    })
}

fn run_filter(model: &DiscreteLgssm, data: &ObservationData, cap: usize, downdate: bool) -> Result<ExactFilterTrace> {
    model.check_data(data)?;
    let dm = DenseModel::new(model, cap)?;
    let d = model.dim;
    let mut steps: Vec<ExactStep> = Vec::with_capacity(model.num_states());
    for k in 0..model.num_states() {
        let (mean_pred, cov_pred, factor_pred) = match steps.last() {
            None => (
                model.initial_mean.clone(),
                dm.sigma[0].clone(),
                DMatrix::zeros(d, 0),
            ),
            Some(prev) => {
                let a = &dm.a[k - 1];
                let mean = a * &prev.updated.mean + &dm.b[k - 1];
                if downdate {
                    let fp = a * prev.factor.as_ref().expect("downdate factor");
                    let cov = &dm.sigma[k] - &fp * fp.transpose();
                    (mean, cov, fp)
                } else {
                    let cov = symmetrize(&(a * &prev.updated.cov * a.transpose() + &dm.q[k - 1]));
                    (mean, cov, DMatrix::zeros(d, 0))
                }
            }
        };
        let (updated, update, factor) = match (&dm.obs[k], &data[k]) {
            (Some((h, noise, offset)), Some(y)) => {
                let uc = update_cache(k, h, noise, offset, y, &mean_pred, &cov_pred)?;
                if downdate {
                    let mean = &mean_pred + &cov_pred * &uc.w_vec;
                    let factor = hcat(&factor_pred, &(&cov_pred * &uc.w_mat));
                    let cov = &dm.sigma[k] - &factor * factor.transpose();
                    (GaussianBelief::new(mean, cov), Some(uc), factor)
                } else {
                    let mean = &mean_pred + &uc.gain * &uc.residual;
                    let cov = symmetrize(&(&cov_pred - &uc.gain * h * &cov_pred));
                    (GaussianBelief::new(mean, cov), Some(uc), factor_pred.clone())
                }
            }
            _ => (
                GaussianBelief::new(mean_pred.clone(), cov_pred.clone()),
                None,
                factor_pred.clone(),
            ),
        };
        steps.push(ExactStep {
            predicted: GaussianBelief::new(mean_pred, cov_pred),
            updated,
            update,
            factor_pred: downdate.then_some(factor_pred),
            factor: downdate.then_some(factor),
        });
    }
    Ok(ExactFilterTrace { steps })
}

/// Standard Kalman filter.
pub fn kalman_filter(model: &DiscreteLgssm, data: &ObservationData) -> Result<ExactFilterTrace> {
    run_filter(model, data, DEFAULT_DENSE_CAP, false)
}

pub fn kalman_filter_capped(model: &DiscreteLgssm, data: &ObservationData, cap: usize) -> Result<ExactFilterTrace> {
    run_filter(model, data, cap, false)
}

/// Kalman filter in downdate form: `P_k = Σ_k − M_k M_kᵀ` with `M_k = (A M_{k−1} | P⁻_k W_k)`.
pub fn downdate_kalman_filter(model: &DiscreteLgssm, data: &ObservationData) -> Result<ExactFilterTrace> {
    run_filter(model, data, DEFAULT_DENSE_CAP, true)
}

pub fn downdate_kalman_filter_capped(
    model: &DiscreteLgssm,
    data: &ObservationData,
    cap: usize,
) -> Result<ExactFilterTrace> {
    run_filter(model, data, cap, true)
}

/// Rauch–Tung–Striebel smoother with gain `P_k A_kᵀ (P⁻_{k+1})⁻¹`.
pub fn rts_smoother(trace: &ExactFilterTrace, model: &DiscreteLgssm) -> Result<Vec<GaussianBelief>> {
    let n = trace.steps.len();
    let mut out = vec![trace.steps[n - 1].updated.clone(); n];
    for k in (0..n - 1).rev() {
        let a = model.transitions[k].a.to_dense();
        let filt = &trace.steps[k].updated;
        let pred_next = &trace.steps[k + 1].predicted;
        let chol = cholesky_jitter(&pred_next.cov)
            .ok_or_else(|| Error::Singular(format!("predicted covariance at step {}", k + 1)))?;
        let cross = &filt.cov * a.transpose();
        let gain = chol.solve(&cross.transpose()).transpose();
        let next = &out[k + 1];
        let mean = &filt.mean + &gain * (&next.mean - &pred_next.mean);
        let cov = symmetrize(&(&filt.cov + &gain * (&next.cov - &pred_next.cov) * gain.transpose()));
        out[k] = GaussianBelief::new(mean, cov);
    }
    Ok(out)
}

/// Output of [`inverse_free_smoother`].
#[derive(Debug, Clone)]
pub struct SmootherResult {
    pub beliefs: Vec<GaussianBelief>,
    pub factors: Vec<DMatrix<f64>>,
    /// Backward carriers `wˢ_k` and `Wˢ_k`.
    pub w_vec: Vec<DVector<f64>>,
    pub w_mat: Vec<DMatrix<f64>>,
}

/// RTS smoother without inverting state covariances; needs a downdate-form trace.
pub fn inverse_free_smoother(trace: &ExactFilterTrace, model: &DiscreteLgssm) -> Result<SmootherResult> {
    let n = trace.steps.len();
    let d = model.dim;
    let factor = |k: usize| {
        trace.steps[k]
            .factor
            .as_ref()
            .ok_or_else(|| Error::invalid("inverse-free smoother needs a downdate-form filter trace"))
    };
    let local = |k: usize| match &trace.steps[k].update {
        Some(u) => (u.w_vec.clone(), u.w_mat.clone()),
        None => (DVector::zeros(d), DMatrix::zeros(d, 0)),
    };
    let mut w_vec = vec![DVector::zeros(d); n];
    let mut w_mat = vec![DMatrix::zeros(d, 0); n];
    let mut beliefs = vec![trace.steps[n - 1].updated.clone(); n];
    let mut factors = vec![factor(n - 1)?.clone(); n];
    let (wl, wm) = local(n - 1);
    w_vec[n - 1] = wl;
    w_mat[n - 1] = wm;
    for k in (0..n - 1).rev() {
        let a = model.transitions[k].a.to_dense();
        let sigma = model.marginal_covs[k].to_dense();
        let filt = &trace.steps[k].updated;
        let at_w = a.transpose() * &w_vec[k + 1];
        let at_wm = a.transpose() * &w_mat[k + 1];
        let mean = &filt.mean + &filt.cov * &at_w;
        let fac = hcat(factor(k)?, &(&filt.cov * &at_wm));
        let cov = &sigma - &fac * fac.transpose();
        beliefs[k] = GaussianBelief::new(mean, cov);
        factors[k] = fac;
        let (wl, wm) = local(k);
        let pred_cov = &trace.steps[k].predicted.cov;
        // (I − W Wᵀ P⁻) x
        let project = |x: &DMatrix<f64>| x - &wm * (wm.transpose() * (pred_cov * x));
        let carried = project(&DMatrix::from_column_slice(d, 1, at_w.as_slice()));
        w_vec[k] = wl + carried.column(0);
        w_mat[k] = hcat(&wm, &project(&at_wm));
    }
    Ok(SmootherResult {
        beliefs,
        factors,
        w_vec,
        w_mat,
    })
}
