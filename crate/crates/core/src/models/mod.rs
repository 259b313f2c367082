//! Priors and state-space models: Matérn kernels, temporal SDEs, space-time separable
//! Gauss–Markov processes and the discrete linear-Gaussian state-space models they induce.

pub mod kernel;
pub mod lgssm;
pub mod sde;
pub mod spacetime;

use nalgebra::DVector;

use crate::linops::OpRef;
use crate::Result;

pub use kernel::{sphere_embed, Geometry, Kernel, MaternFamily};
pub use lgssm::{DenseStep, DiscreteLgssm, Observation, ObservationData};
pub use sde::TemporalSde;
pub use spacetime::{dense_joint_prior, discretize_stsgmp, SpaceTimeGmp};

/// Affine Gaussian transition `u_t = A u_s + b + q`, `q ~ N(0, Q)`.
#[derive(Clone)]
pub struct Transition {
    pub a: OpRef,
    pub b: DVector<f64>,
    pub q: OpRef,
    /// Optional left square root of `Q` for sampling.
    pub q_sqrt: Option<OpRef>,
}

/// A continuous-time Gauss–Markov process.
pub trait ContinuousGmp: Send + Sync {
    fn dim(&self) -> usize;
    /// Transition from time `s` to time `t ≥ s`.
    fn transition(&self, t: f64, s: f64) -> Result<Transition>;
    fn marginal_mean(&self, t: f64) -> DVector<f64>;
    fn marginal_cov(&self, t: f64) -> OpRef;
    fn marginal_sqrt(&self, _t: f64) -> Option<OpRef> {
        None
    }
}
