//! Projected update step: batch form and iterative (Gram–Schmidt) form.

use nalgebra::{DMatrix, DVector};

use super::policy::{Policy, PolicyContext};
use super::StoppingRule;
use crate::dense::{hcat, pinv_lsqrt};
use crate::linops::LinearMap;
use crate::{Error, Result};

/// Relative cutoff for the pseudo-inverse of the projected innovation matrix.
pub const PINV_CUTOFF: f64 = 1e-12;
/// Actions with `η ≤ ACTION_FLOOR · sᵀĜs` are rejected as Ĝ-dependent.
pub const ACTION_FLOOR: f64 = 1e-12;

/// Predicted belief `N(m⁻, Σ − M⁻M⁻ᵀ)` together with the observation model of the step.
pub struct UpdateInput<'a> {
    pub mean_pred: &'a DVector<f64>,
    pub factor_pred: &'a DMatrix<f64>,
    pub sigma: &'a dyn LinearMap,
    pub h: &'a dyn LinearMap,
    pub noise: &'a dyn LinearMap,
    /// `y − c`.
    pub y: &'a DVector<f64>,
    pub step: usize,
}

impl UpdateInput<'_> {
    /// `P⁻ X`.
    pub fn apply_pred_cov(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.sigma.apply(x);
        if self.factor_pred.ncols() > 0 {
            let inner = self.factor_pred.tr_mul(x);
            out.gemm(-1.0, self.factor_pred, &inner, 1.0);
        }
        out
    }

    fn initial_residual(&self) -> DVector<f64> {
        self.y - self.h.apply_vec(self.mean_pred)
    }

    fn check(&self) -> Result<()> {
        let d = self.mean_pred.len();
        let n = self.y.len();
        for (what, got, expected) in [
            ("predicted factor", self.factor_pred.nrows(), d),
            ("prior covariance", self.sigma.nrows(), d),
            ("observation operator", self.h.ncols(), d),
            ("observation operator rows", self.h.nrows(), n),
            ("observation noise", self.noise.nrows(), n),
        ] {
            if got != expected {
                return Err(Error::DimensionMismatch {
                    context: what,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }
}

/// Outputs of one projected update.
#[derive(Debug, Clone)]
pub struct UpdateOutput {
    pub mean: DVector<f64>,
    /// `M̂ = (M⁻ | P⁻Ŵ)`.
    pub factor: DMatrix<f64>,
    /// `ŵ = Hᵀ S V̌ V̌ᵀ Sᵀ r⁽⁰⁾`.
    pub w: DVector<f64>,
    /// `Ŵ = Hᵀ S V̌`.
    pub w_mat: DMatrix<f64>,
    /// Accepted actions as columns.
    pub actions: DMatrix<f64>,
    /// `V̌` with `V̌ V̌ᵀ = (Sᵀ Ĝ S)†`.
    pub v_check: DMatrix<f64>,
    /// Residual 2-norms, starting with `‖r⁽⁰⁾‖`.
    pub residual_norms: Vec<f64>,
    pub iterations: usize,
    pub rejected: usize,
    /// Set when the batch pseudo-inverse discarded a direction.
    pub pinv_truncated: bool,
}

/// Update with a given action matrix `S` (`N × N̂`).
pub fn cakf_update_batch(input: &UpdateInput<'_>, s: &DMatrix<f64>) -> Result<UpdateOutput> {
    input.check()?;
    let n = input.y.len();
    if s.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "action matrix",
            expected: n,
            got: s.nrows(),
        });
    }
    let r0 = input.initial_residual();
    let ht = input.h.adjoint(s); // Ȟᵀ = Hᵀ S
    let pht = input.apply_pred_cov(&ht); // P⁻ Ȟᵀ
    let g = ht.tr_mul(&pht) + s.tr_mul(&input.noise.apply(s));
    let (v_check, pinv_truncated) = pinv_lsqrt(&g, PINV_CUTOFF);
    if v_check.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("projected innovation at step {}", input.step)));
    }
    let proj = v_check.tr_mul(&s.tr_mul(&r0)); // V̌ᵀ Sᵀ r⁽⁰⁾
    let coef = &v_check * &proj;
    let w = &ht * &coef;
    let w_mat = &ht * &v_check;
    let mean = input.mean_pred + &pht * &coef;
    let factor = hcat(input.factor_pred, &(&pht * &v_check));
    // r = r⁽⁰⁾ − Ĝ S c with Ĝ S = H P⁻ Ȟᵀ + Λ S.
    let gs = input.h.apply(&pht) + input.noise.apply(s);
    let r = &r0 - gs * &coef;
    Ok(UpdateOutput {
        mean,
        factor,
        w,
        w_mat,
        actions: s.clone(),
        v_check,
        residual_norms: vec![r0.norm(), r.norm()],
        iterations: s.ncols(),
        rejected: 0,
        pinv_truncated,
    })
}

/// Iterative update: actions from `policy`, Ĝ-orthonormalized one at a time.
pub fn cakf_update_iterative(
    input: &UpdateInput<'_>,
    policy: &mut dyn Policy,
    stopping: &StoppingRule,
) -> Result<UpdateOutput> {
    input.check()?;
    let n = input.y.len();
    let d = input.mean_pred.len();
    let budget = stopping.max_iterations.min(n);
    let mut r = input.initial_residual();
    let r0_norm = r.norm();
    let tol = stopping.atol + stopping.rtol * r0_norm;
    let mut norms = vec![r0_norm];

    // Ĝ-orthonormal directions V̂, their images Ĝ V̂ and P⁻ Hᵀ V̂, and V̂ = S V̌.
    let mut vhat = DMatrix::<f64>::zeros(n, 0);
    let mut gv = DMatrix::<f64>::zeros(n, 0);
    let mut phv = DMatrix::<f64>::zeros(d, 0);
    let mut v_check = DMatrix::<f64>::zeros(0, 0);
    let mut actions = DMatrix::<f64>::zeros(n, 0);
    // v̂ = V̂ β.
    let mut beta: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut rejected = 0;

    while iterations < budget && !(r.norm() <= tol) {
        iterations += 1;
        let s = policy.action(&PolicyContext {
            iteration: iterations,
            residual: &r,
            step: input.step,
            obs_dim: n,
        })?;
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                context: "policy action",
                expected: n,
                got: s.len(),
            });
        }
        let smat = DMatrix::from_column_slice(n, 1, s.as_slice());
        let z = input.apply_pred_cov(&input.h.adjoint(&smat)); // P⁻ Hᵀ s
        let gs = input.h.apply(&z) + input.noise.apply(&smat);
        let sgs = s.dot(&gs.column(0));
        let c = gv.tr_mul(&smat); // V̂ᵀ Ĝ s
        let dvec = &smat - &vhat * &c;
        let gd = &gs - &gv * &c;
        let eta = dvec.dot(&gd);
        if !eta.is_finite() || !sgs.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite action energy at step {}, iteration {iterations}",
                input.step
            )));
        }
        if !(eta > ACTION_FLOOR * sgs.abs()) || sgs <= 0.0 {
            rejected += 1;
            norms.push(r.norm());
            continue;
        }
        let alpha = s.dot(&r);
        let scale = 1.0 / eta.sqrt();
        let pd = &z - &phv * &c;
        let m = vhat.ncols();
        // New coefficient column: (e_m − V̌ c) / √η in the basis of accepted actions.
        let mut vc = DMatrix::zeros(m + 1, m + 1);
        vc.view_mut((0, 0), (m, m)).copy_from(&v_check);
        let mut col = DVector::zeros(m + 1);
        col[m] = 1.0;
        if m > 0 {
            let prev = &v_check * &c;
            for i in 0..m {
                col[i] = -prev[(i, 0)];
            }
        }
        vc.set_column(m, &(col * scale));
        v_check = vc;
        vhat = hcat(&vhat, &(dvec * scale));
        gv = hcat(&gv, &(&gd * scale));
        phv = hcat(&phv, &(pd * scale));
        actions = hcat(&actions, &smat);
        beta.push(alpha * scale);
        r -= gd.column(0) * (alpha / eta);
        norms.push(r.norm());
    }

    let beta = DVector::from_vec(beta);
    let w_mat = input.h.adjoint(&vhat);
    let w = &w_mat * &beta;
    let mean = input.mean_pred + &phv * &beta;
    let factor = hcat(input.factor_pred, &phv);
    Ok(UpdateOutput {
        mean,
        factor,
        w,
        w_mat,
        actions,
        v_check,
        residual_norms: norms,
        iterations,
        rejected,
        pinv_truncated: false,
    })
}
