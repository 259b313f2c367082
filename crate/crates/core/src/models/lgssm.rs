//! Discrete-time linear-Gaussian state-space models.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{ContinuousGmp, Transition};
use crate::dense::{psd_sqrt, symmetrize};
use crate::linops::{dense, OpRef};
use crate::{Error, Result};

/// Observation operator and noise of one step: `y = H u + c + ε`, `ε ~ N(0, Λ)`.
#[derive(Clone)]
pub struct Observation {
    pub h: OpRef,
    pub noise: OpRef,
    pub offset: Option<DVector<f64>>,
}

impl Observation {
    pub fn new(h: OpRef, noise: OpRef) -> Self {
        Self {
            h,
            noise,
            offset: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// `y − c`.
    pub fn centered(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.offset {
            Some(c) => y - c,
            None => y.clone(),
        }
    }
}

/// Observed values per state index; `None` marks a step without data.
pub type ObservationData = Vec<Option<DVector<f64>>>;

/// Dense transition used to build small models.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub q: DMatrix<f64>,
}

/// An LGSSM over states `u_0, …, u_n`.
///
/// `transitions[k]` maps `u_k` to `u_{k+1}`. Every state index may carry an observation;
/// filters start from the prior of `u_0` and condition on `observations[0]` if present.
#[derive(Clone)]
pub struct DiscreteLgssm {
    pub dim: usize,
    pub initial_mean: DVector<f64>,
    pub initial_cov: OpRef,
    pub initial_sqrt: Option<OpRef>,
    pub transitions: Vec<Transition>,
    pub marginal_means: Vec<DVector<f64>>,
    pub marginal_covs: Vec<OpRef>,
    pub observations: Vec<Option<Observation>>,
    pub times: Option<Vec<f64>>,
    pub continuous: Option<Arc<dyn ContinuousGmp>>,
}

impl DiscreteLgssm {
    /// Build a model from dense pieces, computing the prior marginals by recursion.
    pub fn dense(
        initial_mean: DVector<f64>,
        initial_cov: DMatrix<f64>,
        steps: Vec<DenseStep>,
        observations: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>>,
    ) -> Result<Self> {
        let d = initial_mean.len();
        if initial_cov.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                context: "initial covariance",
                expected: d,
                got: initial_cov.nrows(),
            });
        }
        if observations.len() != steps.len() + 1 {
            return Err(Error::invalid(format!(
                "{} transitions need {} observation slots, got {}",
                steps.len(),
                steps.len() + 1,
                observations.len()
            )));
        }
        let mut means = vec![initial_mean.clone()];
        let mut covs = vec![initial_cov.clone()];
        let mut transitions = Vec::with_capacity(steps.len());
        for s in steps {
            if s.a.shape() != (d, d) || s.q.shape() != (d, d) || s.b.len() != d {
                return Err(Error::invalid("dense transition has the wrong shape"));
            }
            let m = &s.a * means.last().unwrap() + &s.b;
            let c = symmetrize(&(&s.a * covs.last().unwrap() * s.a.transpose() + &s.q));
            means.push(m);
            covs.push(c);
            transitions.push(Transition {
                q_sqrt: Some(dense(psd_sqrt(&s.q))),
                a: dense(s.a),
                b: s.b,
                q: dense(s.q),
            });
        }
        let observations = observations
            .into_iter()
            .map(|o| {
                o.map(|(h, l)| {
                    if h.ncols() != d || l.shape() != (h.nrows(), h.nrows()) {
                        return Err(Error::invalid("dense observation has the wrong shape"));
                    }
                    Ok(Observation::new(dense(h), dense(l)))
                })
                .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim: d,
            initial_sqrt: Some(dense(psd_sqrt(&initial_cov))),
            initial_mean,
            initial_cov: dense(initial_cov),
            transitions,
            marginal_means: means,
            marginal_covs: covs.into_iter().map(dense).collect(),
            observations,
            times: None,
            continuous: None,
        })
    }

    /// Number of states `n + 1`.
    pub fn num_states(&self) -> usize {
        self.marginal_means.len()
    }

    pub fn is_missing(&self, k: usize) -> bool {
        self.observations[k].is_none()
    }

    /// Check that `data` provides a vector of the right size exactly at the observed steps.
    pub fn check_data(&self, data: &ObservationData) -> Result<()> {
        if data.len() != self.num_states() {
            return Err(Error::invalid(format!(
                "expected {} observation slots, got {}",
                self.num_states(),
                data.len()
            )));
        }
        for (k, (obs, y)) in self.observations.iter().zip(data).enumerate() {
            match (obs, y) {
                (Some(o), Some(y)) if o.dim() != y.len() => {
                    return Err(Error::invalid(format!(
                        "step {k}: observation has {} entries, model expects {}",
                        y.len(),
                        o.dim()
                    )))
                }
                (Some(_), None) => {
                    return Err(Error::invalid(format!("step {k}: missing observation data")))
                }
                (None, Some(_)) => {
                    return Err(Error::invalid(format!("step {k}: data given for an unobserved step")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Refuse dense reference computations beyond `cap` state dimensions.
    pub fn check_dense_cap(&self, cap: usize) -> Result<()> {
        if self.dim > cap {
            return Err(Error::TooLarge {
                what: "state dimension",
                size: self.dim,
                cap,
            });
        }
        Ok(())
    }

    /// Dense `Σ_k`.
    pub fn dense_marginal_cov(&self, k: usize) -> DMatrix<f64> {
        self.marginal_covs[k].to_dense()
    }
}
