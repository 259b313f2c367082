//! Filter and smoother states between grid times.

use nalgebra::{DMatrix, DVector};

use super::{as_col, downdated_apply, CaksResult};
use crate::cakf::CakfTrace;
use crate::dense::{hcat, row_sq_norms};
use crate::exact::GaussianBelief;
use crate::linops::OpRef;
use crate::models::{ContinuousGmp, DiscreteLgssm};
use crate::{Error, Result};

/// Belief `N(mean, Σ(t) − factor factorᵀ)` at an arbitrary time.
#[derive(Clone)]
pub struct InterpolatedState {
    pub mean: DVector<f64>,
    pub factor: DMatrix<f64>,
    pub sigma: OpRef,
    /// Grid index `k` with `t_k ≤ t < t_{k+1}`, if any.
    pub bracket: Option<usize>,
}

impl InterpolatedState {
    pub fn variances(&self) -> DVector<f64> {
        self.sigma.diagonal() - row_sq_norms(&self.factor)
    }

    pub fn to_dense_belief(&self) -> GaussianBelief {
        let cov = self.sigma.to_dense() - &self.factor * self.factor.transpose();
        GaussianBelief::new(self.mean.clone(), cov)
    }
}

fn grid(model: &DiscreteLgssm) -> Result<(&[f64], &dyn ContinuousGmp)> {
    match (&model.times, &model.continuous) {
        (Some(t), Some(g)) => Ok((t.as_slice(), g.as_ref())),
        _ => Err(Error::invalid("interpolation needs a model with times and a continuous prior")),
    }
}

fn bracket(times: &[f64], t: f64) -> Option<usize> {
    match times.partition_point(|&s| s <= t) {
        0 => None,
        p => Some(p - 1),
    }
}

/// Filter belief at time `t`.
pub fn cakf_interpolate(t: f64, trace: &CakfTrace, model: &DiscreteLgssm) -> Result<InterpolatedState> {
    let (times, gmp) = grid(model)?;
    let k = bracket(times, t);
    match k {
        Some(k) if times[k] == t => Ok(InterpolatedState {
            mean: trace.steps[k].mean.clone(),
            factor: trace.steps[k].factor.clone(),
            sigma: model.marginal_covs[k].clone(),
            bracket: Some(k),
        }),
        None => Ok(InterpolatedState {
            mean: gmp.marginal_mean(t),
            factor: DMatrix::zeros(model.dim, 0),
            sigma: gmp.marginal_cov(t),
            bracket: None,
        }),
        Some(k) => {
            let tr = gmp.transition(t, times[k])?;
            Ok(InterpolatedState {
                mean: tr.a.apply_vec(&trace.steps[k].mean) + tr.b,
                factor: tr.a.apply(&trace.steps[k].truncated),
                sigma: gmp.marginal_cov(t),
                bracket: Some(k),
            })
        }
    }
}

/// Smoother belief at time `t`.
pub fn caks_interpolate(
    t: f64,
    trace: &CakfTrace,
    smoother: &CaksResult,
    model: &DiscreteLgssm,
) -> Result<InterpolatedState> {
    let (times, gmp) = grid(model)?;
    let n = times.len();
    if let Some(k) = bracket(times, t) {
        if times[k] == t {
            return Ok(InterpolatedState {
                mean: smoother.means[k].clone(),
                factor: smoother.factors[k].clone(),
                sigma: model.marginal_covs[k].clone(),
                bracket: Some(k),
            });
        }
    }
    let filt = cakf_interpolate(t, trace, model)?;
    let next = filt.bracket.map_or(0, |k| k + 1);
    if next >= n {
        return Ok(filt);
    }
    let a_next = gmp.transition(times[next], t)?.a;
    let at_w = a_next.adjoint(&as_col(&smoother.w_vec[next]));
    let at_wm = a_next.adjoint(&smoother.w_mat[next]);
    let p = downdated_apply(filt.sigma.as_ref(), &filt.factor, &hcat(&at_w, &at_wm));
    Ok(InterpolatedState {
        mean: &filt.mean + p.column(0),
        factor: hcat(&filt.factor, &p.columns(1, at_wm.ncols()).into_owned()),
        sigma: filt.sigma,
        bracket: filt.bracket,
    })
}
