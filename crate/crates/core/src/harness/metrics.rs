//! Pointwise error metrics.

use nalgebra::DVector;

use crate::{Error, Result};

fn check_len(what: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            context: what,
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// `(1/D) ‖u⋆ − m‖²`.
pub fn mse(truth: &DVector<f64>, mean: &DVector<f64>) -> Result<f64> {
    check_len("mse", truth.len(), mean.len())?;
    if truth.is_empty() {
        return Err(Error::invalid("mse of an empty vector"));
    }
    Ok((truth - mean).norm_squared() / truth.len() as f64)
}

/// Average marginal negative log density `(1/2D) Σ_d [(u⋆_d − m_d)² / P_dd + log(2π P_dd)]`.
pub fn avg_nld(truth: &DVector<f64>, mean: &DVector<f64>, variances: &DVector<f64>) -> Result<f64> {
    check_len("avg_nld mean", truth.len(), mean.len())?;
    check_len("avg_nld variances", truth.len(), variances.len())?;
    if truth.is_empty() {
        return Err(Error::invalid("avg_nld of an empty vector"));
    }
    let mut total = 0.0;
    for (i, ((t, m), v)) in truth.iter().zip(mean.iter()).zip(variances.iter()).enumerate() {
        if !(*v > 0.0) {
            return Err(Error::Numerical(format!("variance at index {i} is not positive ({v:e})")));
        }
        total += (t - m).powi(2) / v + (2.0 * std::f64::consts::PI * v).ln();
    }
    Ok(total / (2.0 * truth.len() as f64))
}
