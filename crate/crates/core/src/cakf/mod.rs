//! Computation-aware Kalman filter.
//!
//! Beliefs are stored as `N(m̂_k, Σ_k − M̂_k M̂_kᵀ)` with a tall factor `M̂_k`. Each update
//! conditions on a few projections `Sᵀ y` of the data, and the factor is truncated to a bounded
//! rank after every step; the dropped part shows up as extra (computational) uncertainty.

pub mod policy;
pub mod update;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dense::row_sq_norms;
use crate::linops::truncate_downdate;
use crate::models::{DiscreteLgssm, ObservationData};
use crate::{Error, Result};

pub use policy::{make_policy, FixedActions, Policy, PolicyContext, PolicyKind};
pub use update::{cakf_update_batch, cakf_update_iterative, UpdateInput, UpdateOutput};

/// Stop after `min(max_iterations, N_k)` iterations or once `‖r‖ ≤ atol + rtol ‖r⁽⁰⁾‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingRule {
    pub max_iterations: usize,
    #[serde(default)]
    pub atol: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
}

fn default_rtol() -> f64 {
    1e-10
}

impl StoppingRule {
    pub fn new(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            atol: 0.0,
            rtol: default_rtol(),
        }
    }

    /// Run exactly `min(max_iterations, N_k)` iterations.
    pub fn exhaustive(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            atol: 0.0,
            rtol: 0.0,
        }
    }
}

/// Rank bound applied to `M̂_k` after every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruncationSchedule {
    None,
    Fixed { rank: usize },
    /// `2 · min(N̂max, N_k)`; steps without data reuse the bound of the last observed step.
    TwiceBudget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateScheme {
    Iterative,
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CakfConfig {
    pub stopping: StoppingRule,
    pub truncation: TruncationSchedule,
    pub scheme: UpdateScheme,
}

impl CakfConfig {
    pub fn new(stopping: StoppingRule, truncation: TruncationSchedule) -> Self {
        Self {
            stopping,
            truncation,
            scheme: UpdateScheme::Iterative,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CakfStep {
    pub mean_pred: DVector<f64>,
    /// `M̂⁻_k = A_{k−1} M̃_{k−1}`.
    pub factor_pred: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Untruncated `M̂_k`.
    pub factor: DMatrix<f64>,
    /// `M̃_k` after truncation.
    pub truncated: DMatrix<f64>,
    /// Dropped part `N_k` with `M̂ M̂ᵀ = M̃ M̃ᵀ + N Nᵀ`.
    pub dropped: DMatrix<f64>,
    pub rank_bound: Option<usize>,
    pub update: Option<UpdateOutput>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CakfTrace {
    pub steps: Vec<CakfStep>,
}

impl CakfTrace {
    pub fn means(&self) -> Vec<DVector<f64>> {
        self.steps.iter().map(|s| s.mean.clone()).collect()
    }

    /// Largest number of factor columns held at any step.
    pub fn peak_factor_columns(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.factor.ncols().max(s.factor_pred.ncols()))
            .max()
            .unwrap_or(0)
    }

    /// `diag(Σ_k − M̂_k M̂_kᵀ)`.
    pub fn variances(&self, model: &DiscreteLgssm, k: usize) -> DVector<f64> {
        model.marginal_covs[k].diagonal() - row_sq_norms(&self.steps[k].factor)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &String> {
        self.steps.iter().flat_map(|s| s.warnings.iter())
    }
}

fn rank_bound(schedule: &TruncationSchedule, budget: Option<usize>) -> Option<usize> {
    match schedule {
        TruncationSchedule::None => None,
        TruncationSchedule::Fixed { rank } => Some(*rank),
        TruncationSchedule::TwiceBudget => budget.map(|b| 2 * b),
    }
}

/// Run the computation-aware filter over all states of `model`.
pub fn cakf_filter(
    model: &DiscreteLgssm,
    data: &ObservationData,
    policy: &mut dyn Policy,
    config: &CakfConfig,
) -> Result<CakfTrace> {
    model.check_data(data)?;
    let d = model.dim;
    let mut steps: Vec<CakfStep> = Vec::with_capacity(model.num_states());
    let mut last_budget: Option<usize> = None;
    for k in 0..model.num_states() {
        let (mean_pred, factor_pred) = match steps.last() {
            None => (model.initial_mean.clone(), DMatrix::zeros(d, 0)),
            Some(prev) => {
                let tr = &model.transitions[k - 1];
                (tr.a.apply_vec(&prev.mean) + &tr.b, tr.a.apply(&prev.truncated))
            }
        };
        let mut warnings = Vec::new();
        let (mean, factor, update) = match (&model.observations[k], &data[k]) {
            (Some(obs), Some(y)) => {
                let yc = obs.centered(y);
                let input = UpdateInput {
                    mean_pred: &mean_pred,
                    factor_pred: &factor_pred,
                    sigma: model.marginal_covs[k].as_ref(),
                    h: obs.h.as_ref(),
                    noise: obs.noise.as_ref(),
                    y: &yc,
                    step: k,
                };
                let budget = config.stopping.max_iterations.min(obs.dim());
                last_budget = Some(budget);
                let out = match config.scheme {
                    UpdateScheme::Iterative => cakf_update_iterative(&input, policy, &config.stopping)?,
                    UpdateScheme::Batch => {
                        let r0 = &yc - obs.h.apply_vec(&mean_pred);
                        let mut cols = Vec::with_capacity(budget);
                        for i in 1..=budget {
                            cols.push(policy.action(&PolicyContext {
                                iteration: i,
                                residual: &r0,
                                step: k,
                                obs_dim: obs.dim(),
                            })?);
                        }
                        let s = if cols.is_empty() {
                            DMatrix::zeros(obs.dim(), 0)
                        } else {
                            DMatrix::from_columns(&cols)
                        };
                        cakf_update_batch(&input, &s)?
                    }
                };
                if out.rejected > 0 {
                    warnings.push(format!(
                        "step {k}: {} action(s) rejected as linearly dependent",
                        out.rejected
                    ));
                }
                if out.pinv_truncated {
                    warnings.push(format!("step {k}: projected innovation matrix is rank deficient"));
                }
                (out.mean.clone(), out.factor.clone(), Some(out))
            }
            (None, None) => (mean_pred.clone(), factor_pred.clone(), None),
            _ => return Err(Error::invalid(format!("step {k}: data and model disagree on missingness"))),
        };
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite filter mean at step {k}")));
        }
        let bound = rank_bound(&config.truncation, last_budget);
        let (truncated, dropped) = match bound {
            Some(b) => {
                let t = truncate_downdate(&factor, b);
                (t.kept, t.dropped)
            }
            None => (factor.clone(), DMatrix::zeros(d, 0)),
        };
        steps.push(CakfStep {
            mean_pred,
            factor_pred,
            mean,
            factor,
            truncated,
            dropped,
            rank_bound: bound,
            update,
            warnings,
        });
    }
    Ok(CakfTrace { steps })
}
