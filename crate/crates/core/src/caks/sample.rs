//! Joint posterior samples of the projected-and-truncated model.

use nalgebra::{DMatrix, DVector};

use super::{as_col, carry, downdated_apply};
use crate::cakf::CakfTrace;
use crate::dense::psd_sqrt;
use crate::draws::{DrawSource, RngDraws};
use crate::exact::DEFAULT_DENSE_CAP;
use crate::linops::LinearMap;
use crate::models::{DiscreteLgssm, ObservationData};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub states: Vec<DVector<f64>>,
    pub warnings: Vec<String>,
}

fn sqrt_draw(
    op: Option<&dyn LinearMap>,
    cov: &dyn LinearMap,
    what: &str,
    draws: &mut dyn DrawSource,
    warnings: &mut Vec<String>,
) -> Result<DVector<f64>> {
    match op {
        Some(l) => {
            if l.ncols() < l.nrows() && !warnings.iter().any(|w| w.starts_with(what)) {
                let err = if l.nrows() <= DEFAULT_DENSE_CAP {
                    let ld = l.to_dense();
                    let c = cov.to_dense();
                    format!("{:.3e}", (&ld * ld.transpose() - &c).norm() / c.norm().max(f64::MIN_POSITIVE))
                } else {
                    "not computed".to_string()
                };
                warnings.push(format!(
                    "{what}: rank-{} square root of a {}-dimensional covariance, relative error {err}",
                    l.ncols(),
                    l.nrows()
                ));
            }
            Ok(l.apply_vec(&draws.normal_vec(l.ncols())))
        }
        None => {
            if cov.nrows() > DEFAULT_DENSE_CAP {
                return Err(Error::TooLarge {
                    what: "dense square root for sampling",
                    size: cov.nrows(),
                    cap: DEFAULT_DENSE_CAP,
                });
            }
            let l = psd_sqrt(&cov.to_dense());
            Ok(&l * draws.normal_vec(l.ncols()))
        }
    }
}

/// Draw with a seeded generator.
pub fn posterior_sample(
    trace: &CakfTrace,
    model: &DiscreteLgssm,
    data: &ObservationData,
    seed: u64,
    stop_after_filter: bool,
) -> Result<PosteriorSample> {
    posterior_sample_with(trace, model, data, &mut RngDraws::new(seed), stop_after_filter)
}

/// One draw from the smoothing posterior (or the filtering marginals if `stop_after_filter`).
///
/// The forward pass conditions a prior draw on the projected data through the stored update
/// factors; truncated directions enter as independent noise `N_k ξ` before the next predict.
pub fn posterior_sample_with(
    trace: &CakfTrace,
    model: &DiscreteLgssm,
    data: &ObservationData,
    draws: &mut dyn DrawSource,
    stop_after_filter: bool,
) -> Result<PosteriorSample> {
    model.check_data(data)?;
    let n = trace.steps.len();
    if n != model.num_states() {
        return Err(Error::invalid("trace and model have different step counts"));
    }
    let d = model.dim;
    let mut warnings = Vec::new();
    let mut filt: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut local_w: Vec<DVector<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let step = &trace.steps[k];
        let pred = if k == 0 {
            &model.initial_mean
                + sqrt_draw(
                    model.initial_sqrt.as_deref(),
                    model.initial_cov.as_ref(),
                    "initial covariance",
                    draws,
                    &mut warnings,
                )?
        } else {
            let prev = &trace.steps[k - 1];
            let mut carried = filt[k - 1].clone();
            if prev.dropped.ncols() > 0 {
                carried += &prev.dropped * draws.normal_vec(prev.dropped.ncols());
            }
            let tr = &model.transitions[k - 1];
            tr.a.apply_vec(&carried) + &tr.b + sqrt_draw(tr.q_sqrt.as_deref(), tr.q.as_ref(), "process noise", draws, &mut warnings)?
        };
        match (&step.update, &model.observations[k], &data[k]) {
            (Some(u), Some(obs), Some(y)) if u.actions.ncols() > 0 => {
                let s = &u.actions;
                let noise_proj = s.tr_mul(&obs.noise.apply(s));
                let eps = psd_sqrt(&noise_proj) * draws.normal_vec(s.ncols());
                let resid = obs.centered(y) - obs.h.apply_vec(&pred);
                let proj = s.tr_mul(&resid) - eps;
                let w = &u.w_mat * u.v_check.tr_mul(&proj);
                let pw = downdated_apply(model.marginal_covs[k].as_ref(), &step.factor_pred, &as_col(&w));
                filt.push(&pred + pw.column(0));
                local_w.push(w);
            }
            _ => {
                filt.push(pred);
                local_w.push(DVector::zeros(d));
            }
        }
    }
    if stop_after_filter {
        return Ok(PosteriorSample {
            states: filt,
            warnings,
        });
    }
    let mut out = filt.clone();
    let mut ws = local_w[n - 1].clone();
    for k in (0..n - 1).rev() {
        let step = &trace.steps[k];
        let sigma = model.marginal_covs[k].as_ref();
        let at_w = model.transitions[k].a.adjoint(&as_col(&ws));
        out[k] = &filt[k] + downdated_apply(sigma, &step.factor, &at_w).column(0);
        let w_mat = step
            .update
            .as_ref()
            .map_or_else(|| DMatrix::zeros(d, 0), |u| u.w_mat.clone());
        ws = &local_w[k] + carry(&w_mat, sigma, &step.factor_pred, &at_w).column(0);
    }
    Ok(PosteriorSample {
        states: out,
        warnings,
    })
}
