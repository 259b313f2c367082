//! Ensemble Kalman filter baselines: stochastic EnKF with perturbed observations and the
//! ensemble transform Kalman filter with sampled (ETKF-S) or Lanczos (ETKF-L) predictions.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dense::{cholesky_jitter, psd_sqrt, row_sq_norms, sorted_eigen};
use crate::draws::{DrawSource, RngDraws};
use crate::linops::{lanczos_lsqrt, sum, LinearMap, LowRankMap, OpRef};
use crate::models::{DiscreteLgssm, Observation, ObservationData};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtkfMode {
    Sampled,
    Lanczos,
}

/// Per-step ensemble moments.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub means: Vec<DVector<f64>>,
    pub variances: Vec<DVector<f64>>,
    /// Deviation factor `X'` per step with ensemble covariance `X' X'ᵀ`.
    pub deviations: Vec<DMatrix<f64>>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

fn draw_with(op: Option<&OpRef>, cov: &dyn LinearMap, cols: usize, draws: &mut RngDraws) -> DMatrix<f64> {
    match op {
        Some(l) => l.apply(&draws.normal_mat(l.ncols(), cols)),
        None => {
            let l = psd_sqrt(&cov.to_dense());
            &l * draws.normal_mat(l.ncols(), cols)
        }
    }
}

fn mean_and_deviations(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let r = x.ncols();
    let mean = x.column_mean();
    let mut dev = x.clone();
    for mut c in dev.column_iter_mut() {
        c -= &mean;
    }
    (mean, dev / ((r.max(2) - 1) as f64).sqrt())
}

fn members(mean: &DVector<f64>, dev: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = ((dev.ncols().max(2) - 1) as f64).sqrt();
    let mut x = dev * scale;
    for mut c in x.column_iter_mut() {
        c += mean;
    }
    x
}

fn check_size(r: usize, min: usize) -> Result<()> {
    if r < min {
        return Err(Error::invalid(format!("ensemble size must be at least {min}, got {r}")));
    }
    Ok(())
}

fn predict_members(model: &DiscreteLgssm, k: usize, x: &DMatrix<f64>, draws: &mut RngDraws) -> DMatrix<f64> {
    let tr = &model.transitions[k - 1];
    let mut out = tr.a.apply(x);
    let noise = draw_with(tr.q_sqrt.as_ref(), tr.q.as_ref(), x.ncols(), draws);
    for (mut c, nc) in out.column_iter_mut().zip(noise.column_iter()) {
        c += &tr.b + nc;
    }
    out
}

/// Stochastic EnKF with `r` members.
pub fn enkf_filter(model: &DiscreteLgssm, data: &ObservationData, r: usize, seed: u64) -> Result<EnsembleRun> {
    check_size(r, 2)?;
    model.check_data(data)?;
    let start = Instant::now();
    let mut draws = RngDraws::new(seed);
    let mut x = draw_with(model.initial_sqrt.as_ref(), model.initial_cov.as_ref(), r, &mut draws);
    for mut c in x.column_iter_mut() {
        c += &model.initial_mean;
    }
    let mut run = EnsembleRun {
        means: Vec::new(),
        variances: Vec::new(),
        deviations: Vec::new(),
        wall_time_s: 0.0,
        warnings: Vec::new(),
    };
    for k in 0..model.num_states() {
        if k > 0 {
            x = predict_members(model, k, &x, &mut draws);
        }
        if let (Some(obs), Some(y)) = (&model.observations[k], &data[k]) {
            let (_, dev) = mean_and_deviations(&x);
            let yd = obs.h.apply(&dev);
            let noise = obs.noise.to_dense();
            let cyy = &yd * yd.transpose() + &noise;
            let chol = cholesky_jitter(&cyy).ok_or(Error::SingularInnovation { step: k })?;
            let lsqrt = psd_sqrt(&noise);
            let pert = &lsqrt * draws.normal_mat(noise.nrows(), r);
            let yc = obs.centered(y);
            let hx = obs.h.apply(&x);
            let mut innov = -hx + pert;
            for mut c in innov.column_iter_mut() {
                c += &yc;
            }
            // X += X' Y'ᵀ C_yy⁻¹ (y + ε_i − H x_i)
            x += &dev * (yd.transpose() * chol.solve(&innov));
        }
        let (mean, dev) = mean_and_deviations(&x);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("EnKF diverged at step {k}")));
        }
        run.variances.push(row_sq_norms(&dev));
        run.means.push(mean);
        run.deviations.push(dev);
    }
    run.wall_time_s = start.elapsed().as_secs_f64();
    Ok(run)
}

/// Symmetric square-root transform of `(x̄, X')` given one observation.
///
/// Returns the updated mean and deviations and whether the transform needed clipping.
pub fn etkf_update(
    mean: &DVector<f64>,
    dev: &DMatrix<f64>,
    obs: &Observation,
    y: &DVector<f64>,
    step: usize,
) -> Result<(DVector<f64>, DMatrix<f64>, bool)> {
    let r = dev.ncols();
    let yd = obs.h.apply(dev);
    let noise = obs.noise.to_dense();
    let chol = cholesky_jitter(&noise).ok_or(Error::SingularInnovation { step })?;
    let linv_yd = chol.solve(&yd); // Λ⁻¹ Y'
    let c = yd.transpose() * &linv_yd;
    let inner = DMatrix::identity(r, r) + c;
    let (vals, vecs) = sorted_eigen(&inner);
    let clipped = vals.iter().any(|&v| v < 1.0 - 1e-8);
    let vals = vals.map(|v| v.max(1.0));
    let inv = &vecs * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v)) * vecs.transpose();
    let transform = &vecs * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt())) * vecs.transpose();
    let resid = obs.centered(y) - obs.h.apply_vec(mean);
    let new_mean = mean + dev * (inv * (linv_yd.transpose() * resid));
    Ok((new_mean, dev * transform, clipped))
}

/// ETKF with `r` members; `mode` selects sampled or Lanczos initialization and prediction.
pub fn etkf_filter(
    model: &DiscreteLgssm,
    data: &ObservationData,
    r: usize,
    seed: u64,
    mode: EtkfMode,
) -> Result<EnsembleRun> {
    check_size(r, if mode == EtkfMode::Sampled { 2 } else { 1 })?;
    model.check_data(data)?;
    let start = Instant::now();
    let d = model.dim;
    let r = r.min(if mode == EtkfMode::Lanczos { d } else { usize::MAX });
    let mut draws = RngDraws::new(seed);
    let mut warnings = Vec::new();
    let lanczos = |op: &dyn LinearMap, draws: &mut RngDraws, warnings: &mut Vec<String>, k: usize| -> Result<DMatrix<f64>> {
        let out = lanczos_lsqrt(op, r, &draws.normal_vec(d))?;
        if out.breakdown {
            warnings.push(format!("step {k}: Lanczos breakdown after {} vectors", out.factor.ncols()));
        }
        Ok(out.factor)
    };
    let (mut mean, mut dev) = match mode {
        EtkfMode::Sampled => {
            let mut x = draw_with(model.initial_sqrt.as_ref(), model.initial_cov.as_ref(), r, &mut draws);
            for mut c in x.column_iter_mut() {
                c += &model.initial_mean;
            }
            mean_and_deviations(&x)
        }
        EtkfMode::Lanczos => (
            model.initial_mean.clone(),
            lanczos(model.initial_cov.as_ref(), &mut draws, &mut warnings, 0)?,
        ),
    };
    let mut run = EnsembleRun {
        means: Vec::new(),
        variances: Vec::new(),
        deviations: Vec::new(),
        wall_time_s: 0.0,
        warnings: Vec::new(),
    };
    for k in 0..model.num_states() {
        if k > 0 {
            match mode {
                EtkfMode::Sampled => {
                    let x = predict_members(model, k, &members(&mean, &dev), &mut draws);
                    (mean, dev) = mean_and_deviations(&x);
                }
                EtkfMode::Lanczos => {
                    let tr = &model.transitions[k - 1];
                    mean = tr.a.apply_vec(&mean) + &tr.b;
                    let ad = tr.a.apply(&dev);
                    let pred: OpRef = sum(vec![Arc::new(LowRankMap { factor: ad }), tr.q.clone()]);
                    dev = lanczos(pred.as_ref(), &mut draws, &mut warnings, k)?;
                }
            }
        }
        if let (Some(obs), Some(y)) = (&model.observations[k], &data[k]) {
            let (m, dv, clipped) = etkf_update(&mean, &dev, obs, y, k)?;
            if clipped {
                warnings.push(format!("step {k}: transform eigenvalues clipped"));
            }
            mean = m;
            dev = dv;
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("ETKF diverged at step {k}")));
        }
        run.means.push(mean.clone());
        run.variances.push(row_sq_norms(&dev));
        run.deviations.push(dev.clone());
    }
    run.warnings = warnings;
    run.wall_time_s = start.elapsed().as_secs_f64();
    Ok(run)
}
