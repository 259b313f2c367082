//! Action policies for the projected update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::draws::{DrawSource, RngDraws};
use crate::{Error, Result};

/// What a policy sees when asked for its next action.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    /// One-based iteration counter within the step.
    pub iteration: usize,
    /// Residual after the previous iteration.
    pub residual: &'a DVector<f64>,
    pub step: usize,
    pub obs_dim: usize,
}

pub trait Policy: Send {
    fn action(&mut self, ctx: &PolicyContext<'_>) -> Result<DVector<f64>>;
    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    /// Current residual (conjugate-gradient actions).
    CgResidual,
    /// Standard basis vectors `e_{j(i)}`; the identity order when `order` is absent.
    Coordinate { order: Option<Vec<usize>> },
    /// Independent standard-normal actions from a per-step stream.
    RandomGaussian { seed: u64 },
}

impl PolicyKind {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::CgResidual => "cg",
            PolicyKind::Coordinate { .. } => "coordinate",
            PolicyKind::RandomGaussian { .. } => "random",
        }
    }
}

pub fn make_policy(kind: &PolicyKind) -> Box<dyn Policy> {
    match kind {
        PolicyKind::CgResidual => Box::new(CgResidual),
        PolicyKind::Coordinate { order } => Box::new(Coordinate {
            order: order.clone(),
        }),
        PolicyKind::RandomGaussian { seed } => Box::new(RandomGaussian::new(*seed)),
    }
}

pub struct CgResidual;

impl Policy for CgResidual {
    fn action(&mut self, ctx: &PolicyContext<'_>) -> Result<DVector<f64>> {
        Ok(ctx.residual.clone())
    }
    fn name(&self) -> &'static str {
        "cg"
    }
}

pub struct Coordinate {
    pub order: Option<Vec<usize>>,
}

impl Policy for Coordinate {
    fn action(&mut self, ctx: &PolicyContext<'_>) -> Result<DVector<f64>> {
        let i = ctx.iteration - 1;
        let j = match &self.order {
            None => i,
            Some(o) => *o
                .get(i)
                .ok_or_else(|| Error::invalid(format!("coordinate order has no entry for iteration {}", i + 1)))?,
        };
        if j >= ctx.obs_dim {
            return Err(Error::invalid(format!(
                "coordinate action {j} outside [0, {}) at step {}",
                ctx.obs_dim, ctx.step
            )));
        }
        let mut e = DVector::zeros(ctx.obs_dim);
        e[j] = 1.0;
        Ok(e)
    }
    fn name(&self) -> &'static str {
        "coordinate"
    }
}

pub struct RandomGaussian {
    seed: u64,
    current: Option<(usize, RngDraws)>,
}

impl RandomGaussian {
    pub fn new(seed: u64) -> Self {
        Self { seed, current: None }
    }
}

impl Policy for RandomGaussian {
    fn action(&mut self, ctx: &PolicyContext<'_>) -> Result<DVector<f64>> {
        if ctx.iteration == 1 || self.current.as_ref().map(|c| c.0) != Some(ctx.step) {
            self.current = Some((ctx.step, RngDraws::with_stream(self.seed, ctx.step as u64)));
        }
        Ok(self.current.as_mut().unwrap().1.normal_vec(ctx.obs_dim))
    }
    fn name(&self) -> &'static str {
        "random"
    }
}

/// Replays given action matrices, one column per iteration.
pub struct FixedActions {
    pub per_step: Vec<Option<DMatrix<f64>>>,
}

impl Policy for FixedActions {
    fn action(&mut self, ctx: &PolicyContext<'_>) -> Result<DVector<f64>> {
        let s = self
            .per_step
            .get(ctx.step)
            .and_then(|s| s.as_ref())
            .ok_or_else(|| Error::invalid(format!("no fixed actions for step {}", ctx.step)))?;
        if ctx.iteration > s.ncols() || s.nrows() != ctx.obs_dim {
            return Err(Error::invalid(format!(
                "fixed actions at step {} cannot serve iteration {}",
                ctx.step, ctx.iteration
            )));
        }
        Ok(s.column(ctx.iteration - 1).into_owned())
    }
    fn name(&self) -> &'static str {
        "fixed"
    }
}
