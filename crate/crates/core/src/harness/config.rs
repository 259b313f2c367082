//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cakf::{PolicyKind, TruncationSchedule, UpdateScheme};
use crate::models::{Geometry, Kernel, MaternFamily, TemporalSde};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_nu")]
    pub temporal_nu: f64,
    #[serde(default = "default_lengthscale")]
    pub temporal_lengthscale: f64,
    #[serde(default = "one")]
    pub output_scale: f64,
    #[serde(default = "default_nu")]
    pub spatial_nu: f64,
    #[serde(default = "default_lengthscale")]
    pub spatial_lengthscale: f64,
    /// Euclidean with the dataset's spatial dimension when absent.
    #[serde(default)]
    pub geometry: Option<Geometry>,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            temporal_nu: default_nu(),
            temporal_lengthscale: default_lengthscale(),
            output_scale: 1.0,
            spatial_nu: default_nu(),
            spatial_lengthscale: default_lengthscale(),
            geometry: None,
            noise_std: default_noise(),
        }
    }
}

fn default_nu() -> f64 {
    1.5
}
fn default_lengthscale() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    0.1
}

impl ModelConfig {
    pub fn temporal(&self) -> Result<TemporalSde> {
        TemporalSde::matern(
            MaternFamily::from_nu(self.temporal_nu)?,
            self.temporal_lengthscale,
            self.output_scale,
        )
    }

    pub fn spatial(&self, dim: usize) -> Result<Kernel> {
        let geometry = self.geometry.unwrap_or(Geometry::Euclidean { dim });
        Kernel::new(
            MaternFamily::from_nu(self.spatial_nu)?,
            self.spatial_lengthscale,
            1.0,
            geometry,
        )
    }
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Sample a trajectory from the discretized prior on a regular grid.
    OnModel {
        #[serde(default)]
        seed: u64,
        #[serde(default = "one_usize")]
        replicates: usize,
        #[serde(default = "default_spatial_dims")]
        spatial_dims: usize,
        /// Grid points per spatial dimension.
        points_per_dim: usize,
        /// Domain `[0, extent]` in every spatial dimension.
        #[serde(default = "default_extent")]
        extent: f64,
        horizon: f64,
        time_points: usize,
        train_times: usize,
        /// Training points per spatial dimension.
        train_points_per_dim: usize,
        /// Seed for the training time subset; the data seed when absent.
        #[serde(default)]
        train_time_seed: Option<u64>,
    },
    /// Noisy `sin(x) exp(−t)` on a regular training grid.
    Synthetic {
        #[serde(default)]
        seed: u64,
        #[serde(default = "one_usize")]
        replicates: usize,
        /// `[time points, space points]`.
        #[serde(default = "default_train_grid")]
        train_grid: [usize; 2],
        #[serde(default = "default_eval_grid")]
        eval_grid: [usize; 2],
        #[serde(default = "one")]
        t_max: f64,
        #[serde(default = "pi")]
        x_max: f64,
    },
    /// A dataset directory written by one of the generators.
    Directory { path: PathBuf },
}

fn one_usize() -> usize {
    1
}
fn default_spatial_dims() -> usize {
    1
}
fn default_extent() -> f64 {
    20.0
}
fn default_train_grid() -> [usize; 2] {
    [11, 16]
}
fn default_eval_grid() -> [usize; 2] {
    [51, 158]
}
fn pi() -> f64 {
    std::f64::consts::PI
}

impl DataConfig {
    /// Data seeds of all replicates.
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            DataConfig::OnModel { seed, replicates, .. } | DataConfig::Synthetic { seed, replicates, .. } => {
                (0..*replicates as u64).map(|i| seed + i).collect()
            }
            DataConfig::Directory { .. } => vec![0],
        }
    }

    pub fn set_seed(&mut self, new: u64) {
        match self {
            DataConfig::OnModel { seed, .. } | DataConfig::Synthetic { seed, .. } => *seed = new,
            DataConfig::Directory { .. } => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cakf,
    Caks,
    Kf,
    Rts,
    Enkf,
    EtkfS,
    EtkfL,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Cakf => "cakf",
            Method::Caks => "caks",
            Method::Kf => "kf",
            Method::Rts => "rts",
            Method::Enkf => "enkf",
            Method::EtkfS => "etkf_s",
            Method::EtkfL => "etkf_l",
        }
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, Method::Enkf | Method::EtkfS | Method::EtkfL)
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Method::Kf | Method::Rts)
    }

    pub fn is_smoother(self) -> bool {
        matches!(self, Method::Caks | Method::Rts)
    }

    /// Smallest admissible rank.
    pub fn min_rank(self) -> usize {
        match self {
            Method::Enkf | Method::EtkfS => 2,
            _ => 1,
        }
    }

    pub fn as_filter(self) -> Self {
        match self {
            Method::Caks => Method::Cakf,
            Method::Rts => Method::Kf,
            m => m,
        }
    }

    pub fn as_smoother(self) -> Option<Self> {
        match self {
            Method::Cakf | Method::Caks => Some(Method::Caks),
            Method::Kf | Method::Rts => Some(Method::Rts),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    /// Rank parameters `r` to sweep. For the computation-aware methods `r` is both the iteration
    /// budget and the truncation rank unless overridden below; for ensembles it is the size.
    #[serde(default = "default_ranks")]
    pub ranks: Vec<usize>,
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub truncation: Option<TruncationSchedule>,
    #[serde(default)]
    pub atol: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_scheme")]
    pub scheme: UpdateScheme,
    /// Seed for ensemble methods and samplers.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one_usize")]
    pub samples: usize,
}

fn default_method() -> Method {
    Method::Cakf
}
fn default_policy() -> PolicyKind {
    PolicyKind::CgResidual
}
fn default_ranks() -> Vec<usize> {
    vec![8]
}
fn default_rtol() -> f64 {
    1e-10
}
fn default_scheme() -> UpdateScheme {
    UpdateScheme::Iterative
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            policy: default_policy(),
            ranks: default_ranks(),
            max_iterations: None,
            truncation: None,
            atol: 0.0,
            rtol: default_rtol(),
            scheme: default_scheme(),
            seed: None,
            samples: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    /// Emit one row per step in addition to the trajectory aggregates.
    #[serde(default)]
    pub per_step: bool,
    /// Write per-step means and standard deviations and residual histories.
    #[serde(default)]
    pub artifacts: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: default_format(),
            per_step: false,
            artifacts: false,
        }
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{what} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn at_least(what: &str, v: usize, min: usize) -> Result<()> {
    if v < min {
        return Err(Error::Config(format!("{what} must be at least {min}, got {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        for (what, nu) in [("model.temporal_nu", m.temporal_nu), ("model.spatial_nu", m.spatial_nu)] {
            MaternFamily::from_nu(nu).map_err(|_| Error::Config(format!("{what} must be 0.5, 1.5 or 2.5, got {nu}")))?;
        }
        positive("model.temporal_lengthscale", m.temporal_lengthscale)?;
        positive("model.spatial_lengthscale", m.spatial_lengthscale)?;
        positive("model.output_scale", m.output_scale)?;
        if !(m.noise_std >= 0.0 && m.noise_std.is_finite()) {
            return Err(Error::Config(format!("model.noise_std must be nonnegative, got {}", m.noise_std)));
        }
        match &self.data {
            DataConfig::OnModel {
                replicates,
                spatial_dims,
                points_per_dim,
                extent,
                horizon,
                time_points,
                train_times,
                train_points_per_dim,
                ..
            } => {
                at_least("data.replicates", *replicates, 1)?;
                at_least("data.spatial_dims", *spatial_dims, 1)?;
                at_least("data.points_per_dim", *points_per_dim, 1)?;
                positive("data.extent", *extent)?;
                positive("data.horizon", *horizon)?;
                at_least("data.time_points", *time_points, 1)?;
                if *train_times > *time_points {
                    return Err(Error::Config("data.train_times exceeds data.time_points".into()));
                }
                if *train_points_per_dim == 0 || *train_points_per_dim > *points_per_dim {
                    return Err(Error::Config(
                        "data.train_points_per_dim must lie in [1, points_per_dim]".into(),
                    ));
                }
            }
            DataConfig::Synthetic {
                replicates,
                train_grid,
                eval_grid,
                t_max,
                x_max,
                ..
            } => {
                at_least("data.replicates", *replicates, 1)?;
                for v in train_grid.iter().chain(eval_grid) {
                    at_least("grid size", *v, 2)?;
                }
                positive("data.t_max", *t_max)?;
                positive("data.x_max", *x_max)?;
            }
            DataConfig::Directory { path } => {
                if path.as_os_str().is_empty() {
                    return Err(Error::Config("data.path is empty".into()));
                }
            }
        }
        let s = &self.solver;
        if !s.method.is_exact() {
            if s.ranks.is_empty() {
                return Err(Error::Config("solver.ranks is empty".into()));
            }
            if let Some(r) = s.ranks.iter().find(|&&r| r < s.method.min_rank()) {
                return Err(Error::Config(format!(
                    "rank {r} is below the minimum {} for {}",
                    s.method.min_rank(),
                    s.method.label()
                )));
            }
        }
        if s.method.is_ensemble() && s.seed.is_none() {
            return Err(Error::Config(format!("{} needs solver.seed", s.method.label())));
        }
        if s.max_iterations == Some(0) {
            return Err(Error::Config("solver.max_iterations must be positive".into()));
        }
        if let Some(TruncationSchedule::Fixed { rank: 0 }) = s.truncation {
            return Err(Error::Config("truncation rank must be positive".into()));
        }
        if !(s.atol >= 0.0 && s.rtol >= 0.0) {
            return Err(Error::Config("solver tolerances must be nonnegative".into()));
        }
        if let PolicyKind::Coordinate { order: Some(o) } = &s.policy {
            if o.is_empty() {
                return Err(Error::Config("coordinate order is empty".into()));
            }
        }
        at_least("solver.samples", s.samples, 1)?;
        Ok(())
    }
}
