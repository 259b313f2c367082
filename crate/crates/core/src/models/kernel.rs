//! Matérn covariance functions on Euclidean space or the sphere.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linops::{GramMap, PointKernel, PointSet};
use crate::{Error, Result};

/// Smoothness of a Matérn covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternFamily {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/2")]
    ThreeHalves,
    #[serde(rename = "5/2")]
    FiveHalves,
}

impl MaternFamily {
    pub fn from_nu(nu: f64) -> Result<Self> {
        match nu {
            x if (x - 0.5).abs() < 1e-12 => Ok(Self::Half),
            x if (x - 1.5).abs() < 1e-12 => Ok(Self::ThreeHalves),
            x if (x - 2.5).abs() < 1e-12 => Ok(Self::FiveHalves),
            _ => Err(Error::invalid(format!(
                "unsupported Matérn smoothness nu = {nu} (expected 0.5, 1.5 or 2.5)"
            ))),
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::ThreeHalves => 1.5,
            Self::FiveHalves => 2.5,
        }
    }

    /// Order of the equivalent state-space model, `nu + 1/2`.
    pub fn order(self) -> usize {
        match self {
            Self::Half => 1,
            Self::ThreeHalves => 2,
            Self::FiveHalves => 3,
        }
    }

    /// Isotropic covariance at distance `r`.
    pub fn eval(self, r: f64, lengthscale: f64, output_scale: f64) -> f64 {
        let s2 = output_scale * output_scale;
        let r = r.abs();
        match self {
            Self::Half => s2 * (-r / lengthscale).exp(),
            Self::ThreeHalves => {
                let a = 3f64.sqrt() * r / lengthscale;
                s2 * (1.0 + a) * (-a).exp()
            }
            Self::FiveHalves => {
                let a = 5f64.sqrt() * r / lengthscale;
                s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Euclidean { dim: usize },
    /// Points are `(latitude°, longitude°)`, compared through their chordal ℝ³ embedding.
    Sphere { radius: f64 },
}

impl Geometry {
    pub fn input_dim(&self) -> usize {
        match self {
            Geometry::Euclidean { dim } => *dim,
            Geometry::Sphere { .. } => 2,
        }
    }
}

/// Embed `(lat°, lon°)` on a sphere of the given radius.
pub fn sphere_embed(lat_deg: f64, lon_deg: f64, radius: f64) -> [f64; 3] {
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    [
        radius * lat.cos() * lon.cos(),
        radius * lat.cos() * lon.sin(),
        radius * lat.sin(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub family: MaternFamily,
    pub lengthscale: f64,
    pub output_scale: f64,
    pub geometry: Geometry,
}

impl Kernel {
    pub fn new(
        family: MaternFamily,
        lengthscale: f64,
        output_scale: f64,
        geometry: Geometry,
    ) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::invalid(format!("lengthscale must be positive, got {lengthscale}")));
        }
        if !(output_scale >= 0.0 && output_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "output scale must be nonnegative, got {output_scale}"
            )));
        }
        match geometry {
            Geometry::Euclidean { dim: 0 } => {
                return Err(Error::invalid("euclidean geometry needs dim >= 1"))
            }
            Geometry::Sphere { radius } if !(radius > 0.0) => {
                return Err(Error::invalid("sphere radius must be positive"))
            }
            _ => {}
        }
        Ok(Self {
            family,
            lengthscale,
            output_scale,
            geometry,
        })
    }

    pub fn euclidean(family: MaternFamily, lengthscale: f64, output_scale: f64, dim: usize) -> Result<Self> {
        Self::new(family, lengthscale, output_scale, Geometry::Euclidean { dim })
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.geometry {
            Geometry::Euclidean { .. } => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Geometry::Sphere { radius } => {
                let p = sphere_embed(a[0], a[1], radius);
                let q = sphere_embed(b[0], b[1], radius);
                p.iter().zip(&q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
        }
    }

    /// `k(x, x')`; points must have the geometry's input dimension.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let dim = self.geometry.input_dim();
        if a.len() != dim || b.len() != dim {
            return Err(Error::invalid(format!(
                "kernel expects {dim}-dimensional points, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(self.family.eval(self.distance(a, b), self.lengthscale, self.output_scale))
    }

    /// Lazy Gramian `K(rows, cols)`.
    pub fn gram(&self, rows: Arc<PointSet>, cols: Arc<PointSet>) -> Result<GramMap> {
        let dim = self.geometry.input_dim();
        if rows.dim != dim || cols.dim != dim {
            return Err(Error::invalid(format!(
                "kernel expects {dim}-dimensional points, got {} and {}",
                rows.dim, cols.dim
            )));
        }
        Ok(GramMap::new(Arc::new(*self), rows, cols))
    }
}

impl PointKernel for Kernel {
    fn dim(&self) -> usize {
        self.geometry.input_dim()
    }
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.family.eval(self.distance(a, b), self.lengthscale, self.output_scale)
    }
}
