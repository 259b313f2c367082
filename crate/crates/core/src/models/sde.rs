//! Matérn temporal priors as linear time-invariant SDEs.

use nalgebra::{DMatrix, DVector};

use super::kernel::MaternFamily;
use super::{ContinuousGmp, Transition};
use crate::dense::{psd_sqrt, symmetrize};
use crate::linops::{dense, OpRef};
use crate::{Error, Result};

/// Companion-form SDE `du = F u dt + L dβ` whose zeroth state component is a Matérn process.
#[derive(Debug, Clone)]
pub struct TemporalSde {
    pub family: MaternFamily,
    pub lengthscale: f64,
    pub output_scale: f64,
    /// Rate `λ` with `F + λI` nilpotent.
    pub rate: f64,
    pub drift: DMatrix<f64>,
    pub stationary_cov: DMatrix<f64>,
    /// Constant mean of the zeroth component (zero by default).
    pub mean: f64,
}

/// Solve `F Σ + Σ Fᵀ + e eᵀ = 0` (e the last unit vector) through its Kronecker form.
fn lyapunov_last(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = f.nrows();
    let eye = DMatrix::<f64>::identity(p, p);
    let sys = eye.kronecker(f) + f.kronecker(&eye);
    let mut rhs = DVector::zeros(p * p);
    rhs[p * p - 1] = -1.0;
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov system".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(p, p, sol.as_slice())))
}

impl TemporalSde {
    pub fn matern(family: MaternFamily, lengthscale: f64, output_scale: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::invalid(format!("temporal lengthscale must be positive, got {lengthscale}")));
        }
        if !(output_scale >= 0.0 && output_scale.is_finite()) {
            return Err(Error::invalid(format!("output scale must be nonnegative, got {output_scale}")));
        }
        let (rate, drift) = match family {
            MaternFamily::Half => {
                let l = 1.0 / lengthscale;
                (l, DMatrix::from_element(1, 1, -l))
            }
            MaternFamily::ThreeHalves => {
                let l = 3f64.sqrt() / lengthscale;
                (l, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -l * l, -2.0 * l]))
            }
            MaternFamily::FiveHalves => {
                let l = 5f64.sqrt() / lengthscale;
                (
                    l,
                    DMatrix::from_row_slice(
                        3,
                        3,
                        &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -l * l * l, -3.0 * l * l, -3.0 * l],
                    ),
                )
            }
        };
        let unit = lyapunov_last(&drift)?;
        let stationary_cov = unit * (output_scale * output_scale / lyapunov_unit_scale(&drift)?);
        Ok(Self {
            family,
            lengthscale,
            output_scale,
            rate,
            drift,
            stationary_cov,
            mean: 0.0,
        })
    }

    pub fn from_nu(nu: f64, lengthscale: f64, output_scale: f64) -> Result<Self> {
        Self::matern(MaternFamily::from_nu(nu)?, lengthscale, output_scale)
    }

    pub fn with_mean(mut self, mean: f64) -> Self {
        self.mean = mean;
        self
    }

    pub fn order(&self) -> usize {
        self.drift.nrows()
    }

    /// `exp(F Δ)` via `e^{−λΔ} Σ_j (Δ (F + λI))^j / j!`, exact because `F + λI` is nilpotent.
    pub fn expm(&self, dt: f64) -> DMatrix<f64> {
        let p = self.order();
        let eye = DMatrix::<f64>::identity(p, p);
        let nil = (&self.drift + &eye * self.rate) * dt;
        let mut term = eye.clone();
        let mut acc = eye;
        for j in 1..p {
            term = &term * &nil / j as f64;
            acc += &term;
        }
        acc * (-self.rate * dt).exp()
    }

    pub fn mean_vector(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.order());
        m[0] = self.mean;
        m
    }

    /// Dense `(A, b, Q)` of the transition from `s` to `t ≥ s`.
    pub fn dense_transition(&self, t: f64, s: f64) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
        if !(t >= s) {
            return Err(Error::invalid(format!("transition needs t >= s, got t = {t}, s = {s}")));
        }
        let p = self.order();
        if t == s {
            return Ok((DMatrix::identity(p, p), DVector::zeros(p), DMatrix::zeros(p, p)));
        }
        let a = self.expm(t - s);
        let q = symmetrize(&(&self.stationary_cov - &a * &self.stationary_cov * a.transpose()));
        let mu = self.mean_vector();
        let b = &mu - &a * &mu;
        Ok((a, b, q))
    }
}

/// Zeroth diagonal entry of the unit-noise stationary covariance.
fn lyapunov_unit_scale(f: &DMatrix<f64>) -> Result<f64> {
    let s = lyapunov_last(f)?[(0, 0)];
    if s > 0.0 {
        Ok(s)
    } else {
        Err(Error::Numerical("nonpositive stationary variance".into()))
    }
}

impl ContinuousGmp for TemporalSde {
    fn dim(&self) -> usize {
        self.order()
    }

    fn transition(&self, t: f64, s: f64) -> Result<Transition> {
        let (a, b, q) = self.dense_transition(t, s)?;
        let q_sqrt = dense(psd_sqrt(&q));
        Ok(Transition {
            a: dense(a),
            b,
            q: dense(q),
            q_sqrt: Some(q_sqrt),
        })
    }

    fn marginal_mean(&self, _t: f64) -> DVector<f64> {
        self.mean_vector()
    }

    fn marginal_cov(&self, _t: f64) -> OpRef {
        dense(self.stationary_cov.clone())
    }

    fn marginal_sqrt(&self, _t: f64) -> Option<OpRef> {
        Some(dense(psd_sqrt(&self.stationary_cov)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matern32_stationary_cov_is_diagonal() {
        let sde = TemporalSde::matern(MaternFamily::ThreeHalves, 0.5, 1.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 12.0]);
        assert!((&sde.stationary_cov - expected).amax() < 1e-12);
    }

    #[test]
    fn matern52_stationary_cov_closed_form() {
        let (ell, sigma) = (0.7, 1.3);
        let sde = TemporalSde::matern(MaternFamily::FiveHalves, ell, sigma).unwrap();
        let l = 5f64.sqrt() / ell;
        let s2 = sigma * sigma;
        let kappa = l * l * s2 / 3.0;
        let expected =
            DMatrix::from_row_slice(3, 3, &[s2, 0.0, -kappa, 0.0, kappa, 0.0, -kappa, 0.0, l.powi(4) * s2]);
        assert!((&sde.stationary_cov - &expected).amax() < 1e-10 * expected.amax());
    }

    #[test]
    fn transition_entry_matches_closed_form() {
        let sde = TemporalSde::matern(MaternFamily::ThreeHalves, 0.5, 1.0).unwrap();
        let (a, _, _) = sde.dense_transition(0.1, 0.0).unwrap();
        let ld = 2.0 * 3f64.sqrt() * 0.1;
        assert!((a[(0, 0)] - (-ld).exp() * (1.0 + ld)).abs() < 1e-14);
        assert!((a[(0, 0)] - 0.9522).abs() < 1e-4);
    }

    #[test]
    fn backwards_transition_is_an_error() {
        let sde = TemporalSde::matern(MaternFamily::Half, 1.0, 1.0).unwrap();
        assert!(sde.dense_transition(0.0, 1.0).is_err());
    }
}
