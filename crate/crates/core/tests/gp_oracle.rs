use std::sync::Arc;

use cakalman::gp_oracle::{
    eval_expansion, gp_posterior, itergp_posterior, projected_precision, rkhs_norm, worst_case_representer,
    BatchGpProblem, SpaceTimeKernel,
};
use cakalman::linops::PointSet;
use cakalman::models::{Kernel, MaternFamily};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(seed: u64, n: usize, noise_var: f64) -> BatchGpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kernel = SpaceTimeKernel {
        temporal: Kernel::euclidean(MaternFamily::ThreeHalves, 0.6, 1.0, 1).unwrap(),
        spatial: Kernel::euclidean(MaternFamily::FiveHalves, 0.8, 1.2, 1).unwrap(),
    };
    let inputs = PointSet::new(2, (0..2 * n).map(|_| rng.random_range(0.0..2.0)).collect());
    let targets = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    BatchGpProblem::new(Arc::new(kernel), inputs, targets, noise_var).unwrap()
}

fn queries(seed: u64, m: usize) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointSet::new(2, (0..2 * m).map(|_| rng.random_range(-0.5..2.5)).collect())
}

#[test]
fn single_observation_closed_form() {
    let k = Kernel::euclidean(MaternFamily::Half, 1.0, 1.0, 1).unwrap();
    let p = BatchGpProblem::new(Arc::new(k), PointSet::new(1, vec![0.0]), DVector::from_element(1, 2.0), 0.5).unwrap();
    let post = gp_posterior(&p, &PointSet::new(1, vec![1.0])).unwrap();
    let kx = (-1.0f64).exp();
    assert!((post.mean[0] - kx * 2.0 / 1.5).abs() < 1e-14);
    assert!((post.cov[(0, 0)] - (1.0 - kx * kx / 1.5)).abs() < 1e-14);
}

#[test]
fn full_actions_recover_the_exact_posterior() {
    let p = problem(1, 12, 0.05);
    let z = queries(2, 7);
    let exact = gp_posterior(&p, &z).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = DMatrix::from_fn(12, 12, |_, _| rng.random_range(-1.0..1.0));
    let proj = itergp_posterior(&p, &s, &z).unwrap();
    assert!((&proj.mean - &exact.mean).amax() < 1e-8);
    assert!((&proj.cov - &exact.cov).amax() < 1e-8);
}

#[test]
fn more_actions_never_increase_variance() {
    let p = problem(4, 15, 0.1);
    let z = queries(5, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = DMatrix::from_fn(15, 15, |_, _| rng.random_range(-1.0..1.0));
    let mut prev = itergp_posterior(&p, &s.columns(0, 1).into_owned(), &z).unwrap().cov;
    for i in 2..=15 {
        let cov = itergp_posterior(&p, &s.columns(0, i).into_owned(), &z).unwrap().cov;
        let gap = &prev - &cov;
        assert!(gap.symmetric_eigenvalues().min() > -1e-10, "{i} actions");
        prev = cov;
    }
}

#[test]
fn projected_precision_flags_redundant_actions() {
    let p = problem(7, 6, 0.1);
    let mut s = DMatrix::from_element(6, 2, 1.0);
    s[(0, 1)] = 2.0;
    assert!(!projected_precision(&p, &s).unwrap().1);
    let dup = DMatrix::from_element(6, 2, 1.0);
    assert!(projected_precision(&p, &dup).unwrap().1);
}

#[test]
fn worst_case_representer_attains_the_bound() {
    let p = problem(8, 10, 0.2);
    let z = queries(9, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let s = DMatrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0));
    let post = itergp_posterior(&p, &s, &z).unwrap();
    for i in 0..z.len() {
        let (centers, coeffs) = worst_case_representer(&p, &s, z.point(i)).unwrap();
        let norm = rkhs_norm(p.kernel.as_ref(), p.noise_var, &centers, &coeffs).unwrap();
        let y = eval_expansion(p.kernel.as_ref(), p.noise_var, &centers, &coeffs, &p.inputs);
        let q = BatchGpProblem::new(p.kernel.clone(), p.inputs.clone(), y, p.noise_var).unwrap();
        let zi = PointSet::new(2, z.point(i).to_vec());
        let mean = itergp_posterior(&q, &s, &zi).unwrap().mean[0];
        let yz = eval_expansion(p.kernel.as_ref(), p.noise_var, &centers, &coeffs, &zi)[0];
        let bound = (post.cov[(i, i)] + p.noise_var).sqrt();
        assert!(((yz - mean) - norm * bound).abs() < 1e-9);
        assert!((norm - bound).abs() < 1e-9);
    }
}

#[test]
fn shape_errors() {
    let p = problem(11, 4, 0.1);
    assert!(gp_posterior(&p, &PointSet::new(1, vec![0.0])).is_err());
    assert!(projected_precision(&p, &DMatrix::zeros(3, 1)).is_err());
    let k = Kernel::euclidean(MaternFamily::Half, 1.0, 1.0, 1).unwrap();
    assert!(BatchGpProblem::new(Arc::new(k), PointSet::new(1, vec![0.0, 1.0]), DVector::zeros(1), 0.1).is_err());
    assert!(rkhs_norm(&k, 0.1, &PointSet::new(1, vec![0.0]), &DVector::zeros(2)).is_err());
}
