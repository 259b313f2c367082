//! Matrix-free exact and computation-aware Bayesian filtering and smoothing for
//! high-dimensional linear-Gaussian state-space models.
//!
//! The crate is organised bottom-up:
//!
//! * [`linops`]: matrix-free linear operators, low-rank downdates, truncation, Lanczos.
//! * [`models`]: Matérn kernels, temporal SDE priors and their space-time discretization.
//! * [`exact`]: dense reference Kalman filter / RTS smoother and their downdate forms.
//! * [`gp_oracle`]: batch GP regression and its action-projected counterpart.
//! * [`cakf`] / [`caks`]: the computation-aware filter, smoother, interpolation and sampler.
//! * [`baselines`]: EnKF and ETKF variants.
//! * [`harness`]: metrics, datasets, experiment configuration and orchestration.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cakf;
pub mod caks;
pub mod dense;
pub mod draws;
pub mod error;
pub mod exact;
pub mod gp_oracle;
pub mod harness;
pub mod linops;
pub mod models;

pub use error::{Error, Result};
