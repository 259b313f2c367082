//! Joint smoothing-posterior samples by pathwise conditioning.

use nalgebra::DVector;

use super::{kalman_filter_capped, DenseModel, DEFAULT_DENSE_CAP};
use crate::dense::{cholesky_jitter, psd_sqrt};
use crate::draws::{DrawSource, RngDraws};
use crate::models::{DiscreteLgssm, ObservationData};
use crate::{Error, Result};

/// One draw of `(u_0, …, u_n) | y` with a seeded generator.
pub fn matheron_sample(model: &DiscreteLgssm, data: &ObservationData, seed: u64) -> Result<Vec<DVector<f64>>> {
    matheron_sample_with(model, data, &mut RngDraws::new(seed))
}

/// One draw of the smoothing posterior using the inverse-free backward recursion.
///
/// A prior trajectory and prior observation noise are drawn; the forward pass conditions each
/// step on `y_k − ỹ_k`, the backward pass propagates `wˢ_k` and corrects the filter samples.
pub fn matheron_sample_with(
    model: &DiscreteLgssm,
    data: &ObservationData,
    draws: &mut dyn DrawSource,
) -> Result<Vec<DVector<f64>>> {
    // Gains and innovations depend only on the model; reuse the filter for them.
    let trace = kalman_filter_capped(model, data, DEFAULT_DENSE_CAP)?;
    let dm = DenseModel::new(model, DEFAULT_DENSE_CAP)?;
    let d = model.dim;
    let n = model.num_states();
    let init_sqrt = psd_sqrt(&dm.sigma[0]);
    let mut filt = Vec::with_capacity(n);
    let mut local_w = Vec::with_capacity(n);
    for k in 0..n {
        let pred = if k == 0 {
            &model.initial_mean + &init_sqrt * draws.normal_vec(d)
        } else {
            let q_sqrt = match &model.transitions[k - 1].q_sqrt {
                Some(s) => s.to_dense(),
                None => psd_sqrt(&dm.q[k - 1]),
            };
            let noise = &q_sqrt * draws.normal_vec(q_sqrt.ncols());
            &dm.a[k - 1] * &filt[k - 1] + &dm.b[k - 1] + noise
        };
        let step = &trace.steps[k];
        match (&dm.obs[k], &data[k], &step.update) {
            (Some((h, noise, offset)), Some(y), Some(uc)) => {
                let eps = psd_sqrt(noise) * draws.normal_vec(noise.nrows());
                let mut resid = y - h * &pred - eps;
                if let Some(c) = offset {
                    resid -= c;
                }
                let chol = cholesky_jitter(&uc.innovation).ok_or(Error::SingularInnovation { step: k })?;
                let w = h.transpose() * chol.solve(&resid);
                filt.push(&pred + &step.predicted.cov * &w);
                local_w.push(Some((w, h.clone(), chol)));
            }
            _ => {
                filt.push(pred);
                local_w.push(None);
            }
        }
    }
    let mut out = filt.clone();
    let mut ws = match &local_w[n - 1] {
        Some((w, _, _)) => w.clone(),
        None => DVector::zeros(d),
    };
    for k in (0..n - 1).rev() {
        let at_w = dm.a[k].transpose() * &ws;
        out[k] = &filt[k] + &trace.steps[k].updated.cov * &at_w;
        let pred_cov = &trace.steps[k].predicted.cov;
        ws = match &local_w[k] {
            Some((w, h, chol)) => {
                let proj: DVector<f64> = h.transpose() * chol.solve(&(h * (pred_cov * &at_w)));
                w + &at_w - proj
            }
            None => at_w,
        };
    }
    Ok(out)
}
