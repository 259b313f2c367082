//! Filtering and smoothing beliefs at arbitrary times of a continuous-discrete model.

use nalgebra::{DMatrix, DVector};

use super::{ExactFilterTrace, GaussianBelief, SmootherResult};
use crate::dense::hcat;
use crate::models::DiscreteLgssm;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct InterpolatedBeliefs {
    pub filtered: GaussianBelief,
    pub smoothed: GaussianBelief,
}

/// Largest `k` with `times[k] ≤ t`, or `None` if `t` precedes all of them.
pub(crate) fn bracket(times: &[f64], t: f64) -> Option<usize> {
    match times.partition_point(|&s| s <= t) {
        0 => None,
        p => Some(p - 1),
    }
}

/// Beliefs at time `t` from a downdate-form filter trace and inverse-free smoother output.
pub fn interpolate(
    trace: &ExactFilterTrace,
    smoother: &SmootherResult,
    model: &DiscreteLgssm,
    t: f64,
) -> Result<InterpolatedBeliefs> {
    let (times, gmp) = match (&model.times, &model.continuous) {
        (Some(ts), Some(g)) => (ts, g),
        _ => return Err(Error::invalid("interpolation needs a model with times and a continuous prior")),
    };
    let n = times.len();
    let d = model.dim;
    let k = bracket(times, t);
    if let Some(k) = k {
        if times[k] == t {
            return Ok(InterpolatedBeliefs {
                filtered: trace.steps[k].updated.clone(),
                smoothed: smoother.beliefs[k].clone(),
            });
        }
    }
    let sigma_t = gmp.marginal_cov(t).to_dense();
    let (mean_t, factor_t) = match k {
        None => (gmp.marginal_mean(t), DMatrix::zeros(d, 0)),
        Some(k) => {
            let tr = gmp.transition(t, times[k])?;
            let a = tr.a.to_dense();
            let factor = trace.steps[k]
                .factor
                .as_ref()
                .ok_or_else(|| Error::invalid("interpolation needs a downdate-form filter trace"))?;
            (&a * &trace.steps[k].updated.mean + tr.b, &a * factor)
        }
    };
    let cov_t = &sigma_t - &factor_t * factor_t.transpose();
    let filtered = GaussianBelief::new(mean_t.clone(), cov_t.clone());
    let next = k.map_or(0, |k| k + 1);
    let smoothed = if next < n {
        let a_next = gmp.transition(times[next], t)?.a.to_dense();
        let cross = &cov_t * a_next.transpose();
        let mean: DVector<f64> = &mean_t + &cross * &smoother.w_vec[next];
        let fac = hcat(&factor_t, &(&cross * &smoother.w_mat[next]));
        GaussianBelief::new(mean, &sigma_t - &fac * fac.transpose())
    } else {
        filtered.clone()
    };
    Ok(InterpolatedBeliefs { filtered, smoothed })
}
