//! Batch Gaussian-process regression used as an independent reference.
//!
//! Inputs are points whose first coordinate is time and whose remaining coordinates are
//! spatial. The prior is the product of a temporal and a spatial kernel with zero mean.

use std::sync::Arc;

use nalgebra::{linalg::Cholesky, DMatrix, DVector};

use crate::dense::{pinv_lsqrt, symmetrize};
use crate::linops::{PointKernel, PointSet};
use crate::models::Kernel;
use crate::{Error, Result};

/// Relative eigenvalue cutoff for the projected Gram pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-12;
pub const ORACLE_CAP: usize = 2000;

/// `k((t, x), (t', x')) = k_t(t, t') · k_x(x, x')`.
#[derive(Debug, Clone, Copy)]
pub struct SpaceTimeKernel {
    pub temporal: Kernel,
    pub spatial: Kernel,
}

impl PointKernel for SpaceTimeKernel {
    fn dim(&self) -> usize {
        1 + PointKernel::dim(&self.spatial)
    }
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        PointKernel::eval(&self.temporal, &a[..1], &b[..1])
            * PointKernel::eval(&self.spatial, &a[1..], &b[1..])
    }
}

pub struct BatchGpProblem {
    pub kernel: Arc<dyn PointKernel>,
    pub inputs: PointSet,
    pub targets: DVector<f64>,
    pub noise_var: f64,
}

/// Posterior mean and covariance at a set of queries.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GpPosterior {
    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

pub fn cross_gram(kernel: &dyn PointKernel, a: &PointSet, b: &PointSet) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| kernel.eval(a.point(i), b.point(j)))
}

impl BatchGpProblem {
    pub fn new(kernel: Arc<dyn PointKernel>, inputs: PointSet, targets: DVector<f64>, noise_var: f64) -> Result<Self> {
        if inputs.dim != kernel.dim() {
            return Err(Error::DimensionMismatch {
                context: "gp inputs",
                expected: kernel.dim(),
                got: inputs.dim,
            });
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                context: "gp targets",
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if inputs.len() > ORACLE_CAP {
            return Err(Error::TooLarge {
                what: "training set size",
                size: inputs.len(),
                cap: ORACLE_CAP,
            });
        }
        if !(noise_var >= 0.0) {
            return Err(Error::invalid("noise variance must be nonnegative"));
        }
        Ok(Self {
            kernel,
            inputs,
            targets,
            noise_var,
        })
    }

    /// `K(Z, Z) + σ² I`.
    pub fn noisy_gram(&self) -> DMatrix<f64> {
        let mut k = cross_gram(self.kernel.as_ref(), &self.inputs, &self.inputs);
        for i in 0..k.nrows() {
            k[(i, i)] += self.noise_var;
        }
        k
    }
}

fn check_queries(p: &BatchGpProblem, z: &PointSet) -> Result<()> {
    if z.dim != p.kernel.dim() {
        return Err(Error::DimensionMismatch {
            context: "gp queries",
            expected: p.kernel.dim(),
            got: z.dim,
        });
    }
    Ok(())
}

/// Exact GP regression posterior at `z`.
pub fn gp_posterior(p: &BatchGpProblem, z: &PointSet) -> Result<GpPosterior> {
    check_queries(p, z)?;
    let chol = Cholesky::new(symmetrize(&p.noisy_gram()))
        .ok_or_else(|| Error::Singular("K(Z, Z) + σ² I".into()))?;
    let kzx = cross_gram(p.kernel.as_ref(), z, &p.inputs);
    let mean = &kzx * chol.solve(&p.targets);
    let kzz = cross_gram(p.kernel.as_ref(), z, z);
    let cov = symmetrize(&(kzz - &kzx * chol.solve(&kzx.transpose())));
    Ok(GpPosterior { mean, cov })
}

/// `C = S (Sᵀ K̂ S)† Sᵀ` together with a flag telling whether the pseudo-inverse discarded
/// any direction.
pub fn projected_precision(p: &BatchGpProblem, s: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    if s.nrows() != p.inputs.len() {
        return Err(Error::DimensionMismatch {
            context: "action matrix",
            expected: p.inputs.len(),
            got: s.nrows(),
        });
    }
    let g = s.transpose() * p.noisy_gram() * s;
    let (v, flag) = pinv_lsqrt(&g, PINV_CUTOFF);
    let sv = s * v;
    Ok((&sv * sv.transpose(), flag))
}

/// GP posterior given only the projected data `Sᵀ y`.
pub fn itergp_posterior(p: &BatchGpProblem, s: &DMatrix<f64>, z: &PointSet) -> Result<GpPosterior> {
    check_queries(p, z)?;
    let (c, _) = projected_precision(p, s)?;
    let kzx = cross_gram(p.kernel.as_ref(), z, &p.inputs);
    let mean = &kzx * (&c * &p.targets);
    let kzz = cross_gram(p.kernel.as_ref(), z, z);
    let cov = symmetrize(&(kzz - &kzx * &c * kzx.transpose()));
    Ok(GpPosterior { mean, cov })
}

/// `K^σ(a, b) = k(a, b) + σ² [a = b]`.
pub fn noisy_kernel(kernel: &dyn PointKernel, noise_var: f64, a: &[f64], b: &[f64]) -> f64 {
    kernel.eval(a, b) + if a == b { noise_var } else { 0.0 }
}

/// `y(x) = Σ_i c_i K^σ(x, z_i)` at each point of `at`.
pub fn eval_expansion(
    kernel: &dyn PointKernel,
    noise_var: f64,
    centers: &PointSet,
    coeffs: &DVector<f64>,
    at: &PointSet,
) -> DVector<f64> {
    DVector::from_fn(at.len(), |i, _| {
        (0..centers.len())
            .map(|j| coeffs[j] * noisy_kernel(kernel, noise_var, at.point(i), centers.point(j)))
            .sum()
    })
}

/// Norm of `Σ_i c_i K^σ(·, z_i)` in the reproducing kernel Hilbert space of `K^σ`.
pub fn rkhs_norm(kernel: &dyn PointKernel, noise_var: f64, centers: &PointSet, coeffs: &DVector<f64>) -> Result<f64> {
    if centers.len() != coeffs.len() {
        return Err(Error::DimensionMismatch {
            context: "expansion coefficients",
            expected: centers.len(),
            got: coeffs.len(),
        });
    }
    let g = DMatrix::from_fn(centers.len(), centers.len(), |i, j| {
        noisy_kernel(kernel, noise_var, centers.point(i), centers.point(j))
    });
    Ok(coeffs.dot(&(g * coeffs)).max(0.0).sqrt())
}

/// Representer of `y ↦ y(z) − mean(z | y)` for the projected posterior with actions `S`.
///
/// Returns the expansion centers `(z, Z_train)` and coefficients `(1, −C K(Z, z))`.
pub fn worst_case_representer(p: &BatchGpProblem, s: &DMatrix<f64>, z: &[f64]) -> Result<(PointSet, DVector<f64>)> {
    let (c, _) = projected_precision(p, s)?;
    let zset = PointSet::new(p.inputs.dim, z.to_vec());
    let kxz = cross_gram(p.kernel.as_ref(), &p.inputs, &zset);
    let beta = c * kxz;
    let n = p.inputs.len();
    let mut coords = z.to_vec();
    coords.extend_from_slice(&p.inputs.coords);
    let coeffs = DVector::from_fn(n + 1, |i, _| if i == 0 { 1.0 } else { -beta[(i - 1, 0)] });
    Ok((PointSet::new(p.inputs.dim, coords), coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MaternFamily;

    fn kernel_1d() -> Arc<dyn PointKernel> {
        Arc::new(Kernel::euclidean(MaternFamily::ThreeHalves, 1.0, 1.0, 1).unwrap())
    }

    #[test]
    fn noiseless_interpolation() {
        let p = BatchGpProblem::new(kernel_1d(), PointSet::new(1, vec![0.3]), DVector::from_element(1, 2.0), 0.0)
            .unwrap();
        let post = gp_posterior(&p, &PointSet::new(1, vec![0.3])).unwrap();
        assert!((post.mean[0] - 2.0).abs() < 1e-12);
        assert!(post.cov[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn single_center_norm() {
        let k = kernel_1d();
        let n = rkhs_norm(k.as_ref(), 0.25, &PointSet::new(1, vec![0.0]), &DVector::from_element(1, 1.0)).unwrap();
        assert!((n - 1.25f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn far_query_is_prior() {
        let p = BatchGpProblem::new(kernel_1d(), PointSet::new(1, vec![0.0]), DVector::from_element(1, 1.0), 0.1)
            .unwrap();
        let post = gp_posterior(&p, &PointSet::new(1, vec![100.0])).unwrap();
        assert!(post.mean[0].abs() < 1e-12);
        assert!((post.cov[(0, 0)] - 1.0).abs() < 1e-12);
    }
}
