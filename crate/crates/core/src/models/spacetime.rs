//! Space-time separable Gauss–Markov processes and their discretization.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::kernel::Kernel;
use super::lgssm::{DiscreteLgssm, Observation};
use super::sde::TemporalSde;
use super::{ContinuousGmp, Transition};
use crate::dense::psd_sqrt;
use crate::linops::{
    dense, identity, kron, LazySqrtMap, OpRef, PointSet, ScaledIdentityMap, SelectionMap,
};
use crate::{Error, Result};

/// Temporal SDE prior times a spatial kernel over a fixed point set.
///
/// The state at time `t` stacks derivative blocks: entry `i · N_X + j` is the `i`-th temporal
/// derivative at spatial point `j`.
pub struct SpaceTimeGmp {
    pub temporal: TemporalSde,
    pub kernel: Kernel,
    pub points: Arc<PointSet>,
    /// Spatial mean evaluated at the points; `None` means zero.
    pub spatial_mean: Option<DVector<f64>>,
    pub gram: OpRef,
    pub gram_sqrt: Arc<LazySqrtMap>,
}

impl SpaceTimeGmp {
    pub fn new(temporal: TemporalSde, kernel: Kernel, points: Arc<PointSet>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("spatial point set is empty"));
        }
        if let Some((i, j)) = points.first_duplicate() {
            return Err(Error::invalid(format!("spatial points {i} and {j} coincide")));
        }
        let gram: OpRef = Arc::new(kernel.gram(points.clone(), points.clone())?);
        let gram_sqrt = Arc::new(LazySqrtMap::new(gram.clone()));
        Ok(Self {
            temporal,
            kernel,
            points,
            spatial_mean: None,
            gram,
            gram_sqrt,
        })
    }

    pub fn with_spatial_mean(mut self, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                context: "spatial mean",
                expected: self.points.len(),
                got: mean.len(),
            });
        }
        self.spatial_mean = Some(mean);
        Ok(self)
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    fn lift_mean(&self, temporal: &DVector<f64>) -> DVector<f64> {
        let n = self.num_points();
        match &self.spatial_mean {
            Some(sm) if temporal.iter().any(|v| *v != 0.0) => {
                DVector::from_fn(temporal.len() * n, |r, _| temporal[r / n] * sm[r % n])
            }
            _ => DVector::zeros(temporal.len() * n),
        }
    }

    /// Seconds spent on the dense spatial square root so far (zero if never needed).
    pub fn sqrt_seconds(&self) -> f64 {
        self.gram_sqrt.compute_seconds().unwrap_or(0.0)
    }
}

impl ContinuousGmp for SpaceTimeGmp {
    fn dim(&self) -> usize {
        self.temporal.order() * self.num_points()
    }

    fn transition(&self, t: f64, s: f64) -> Result<Transition> {
        let (a, b, q) = self.temporal.dense_transition(t, s)?;
        let n = self.num_points();
        let q_sqrt = kron(dense(psd_sqrt(&q)), self.gram_sqrt.clone());
        Ok(Transition {
            a: kron(dense(a), identity(n)),
            b: self.lift_mean(&b),
            q: kron(dense(q), self.gram.clone()),
            q_sqrt: Some(q_sqrt),
        })
    }

    fn marginal_mean(&self, _t: f64) -> DVector<f64> {
        self.lift_mean(&self.temporal.mean_vector())
    }

    fn marginal_cov(&self, _t: f64) -> OpRef {
        kron(dense(self.temporal.stationary_cov.clone()), self.gram.clone())
    }

    fn marginal_sqrt(&self, _t: f64) -> Option<OpRef> {
        Some(kron(
            dense(psd_sqrt(&self.temporal.stationary_cov)),
            self.gram_sqrt.clone(),
        ))
    }
}

/// Discretize a space-time prior at `times` into an LGSSM.
///
/// `plan[k]` lists the spatial point indices observed at `times[k]` (`None` for a step
/// without data); observations pick the zeroth temporal derivative at those points with
/// i.i.d. noise of standard deviation `noise_std`.
pub fn discretize_stsgmp(
    gmp: Arc<SpaceTimeGmp>,
    times: &[f64],
    plan: &[Option<Vec<usize>>],
    noise_std: f64,
) -> Result<DiscreteLgssm> {
    if times.is_empty() {
        return Err(Error::invalid("need at least one time point"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    if plan.len() != times.len() {
        return Err(Error::invalid(format!(
            "observation plan has {} entries for {} times",
            plan.len(),
            times.len()
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(format!("noise std must be nonnegative, got {noise_std}")));
    }
    let nx = gmp.num_points();
    let d = gmp.dim();
    let cov = gmp.marginal_cov(times[0]);
    let mean = gmp.marginal_mean(times[0]);
    let mut cache: HashMap<u64, Transition> = HashMap::new();
    let mut transitions = Vec::with_capacity(times.len() - 1);
    for w in times.windows(2) {
        let key = (w[1] - w[0]).to_bits();
        let tr = match cache.get(&key) {
            Some(tr) => tr.clone(),
            None => {
                let tr = gmp.transition(w[1], w[0])?;
                cache.insert(key, tr.clone());
                tr
            }
        };
        transitions.push(tr);
    }
    let observations = plan
        .iter()
        .enumerate()
        .map(|(k, p)| {
            p.as_ref()
                .map(|idx| {
                    if let Some(bad) = idx.iter().find(|&&i| i >= nx) {
                        return Err(Error::invalid(format!(
                            "step {k}: spatial index {bad} out of range ({nx} points)"
                        )));
                    }
                    let mut sorted = idx.clone();
                    sorted.sort_unstable();
                    if sorted.windows(2).any(|w| w[0] == w[1]) {
                        return Err(Error::invalid(format!("step {k}: repeated spatial index")));
                    }
                    let h: OpRef = Arc::new(SelectionMap::new(idx.clone(), d));
                    let noise: OpRef = Arc::new(ScaledIdentityMap {
                        n: idx.len(),
                        scale: noise_std * noise_std,
                    });
                    Ok(Observation::new(h, noise))
                })
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    let n = times.len();
    Ok(DiscreteLgssm {
        dim: d,
        initial_mean: mean.clone(),
        initial_sqrt: gmp.marginal_sqrt(times[0]),
        initial_cov: cov.clone(),
        transitions,
        marginal_means: vec![mean; n],
        marginal_covs: vec![cov; n],
        observations,
        times: Some(times.to_vec()),
        continuous: Some(gmp as Arc<dyn ContinuousGmp>),
    })
}

/// Dense `Σᵗ(t_i, t_j) ⊗ Σˣ(X, X)` joint prior covariance over `times`, for checks.
pub fn dense_joint_prior(gmp: &SpaceTimeGmp, times: &[f64]) -> Result<DMatrix<f64>> {
    let d = gmp.dim();
    let n = times.len();
    let gram = gmp.gram.to_dense();
    let sinf = &gmp.temporal.stationary_cov;
    let mut out = DMatrix::zeros(d * n, d * n);
    for i in 0..n {
        for j in 0..n {
            let (lo, hi) = if times[i] <= times[j] { (i, j) } else { (j, i) };
            let (a, _, _) = gmp.temporal.dense_transition(times[hi], times[lo])?;
            // Cov(u(t_hi), u(t_lo)) = A Σ∞.
            let c = &a * sinf;
            let block = if hi == i { c } else { c.transpose() };
            out.view_mut((i * d, j * d), (d, d))
                .copy_from(&block.kronecker(&gram));
        }
    }
    Ok(out)
}
