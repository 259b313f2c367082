mod common;

use std::sync::Arc;

use cakalman::linops::PointSet;
use cakalman::models::{
    dense_joint_prior, discretize_stsgmp, sphere_embed, ContinuousGmp, Geometry, Kernel, MaternFamily,
    SpaceTimeGmp, TemporalSde,
};
use common::joint_prior;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FAMILIES: [MaternFamily; 3] = [MaternFamily::Half, MaternFamily::ThreeHalves, MaternFamily::FiveHalves];

fn gmp(nx: usize, family: MaternFamily) -> Arc<SpaceTimeGmp> {
    let temporal = TemporalSde::matern(family, 0.7, 1.4).unwrap();
    let kernel = Kernel::euclidean(MaternFamily::ThreeHalves, 0.9, 1.0, 1).unwrap();
    let pts = Arc::new(PointSet::new(1, (0..nx).map(|i| 0.37 * i as f64).collect()));
    Arc::new(SpaceTimeGmp::new(temporal, kernel, pts).unwrap())
}

#[test]
fn temporal_covariance_is_the_matern_kernel() {
    for family in FAMILIES {
        let sde = TemporalSde::matern(family, 0.7, 1.4).unwrap();
        for tau in [0.0, 0.05, 0.3, 1.0, 2.5] {
            let cov = sde.expm(tau) * &sde.stationary_cov;
            let k = family.eval(tau, 0.7, 1.4);
            assert!((cov[(0, 0)] - k).abs() < 1e-12, "{family:?} at {tau}: {} vs {k}", cov[(0, 0)]);
        }
    }
    // Derivative variance of the Matérn-3/2 process is 3σ²/ℓ².
    let sde = TemporalSde::matern(MaternFamily::ThreeHalves, 0.7, 1.4).unwrap();
    assert!((sde.stationary_cov[(1, 1)] - 3.0 * 1.96 / 0.49).abs() < 1e-10);
    assert!(sde.stationary_cov[(0, 1)].abs() < 1e-12);
}

#[test]
fn transitions_compose_and_preserve_stationarity() {
    for family in FAMILIES {
        let sde = TemporalSde::matern(family, 0.7, 1.4).unwrap().with_mean(0.3);
        let (a1, b1, q1) = sde.dense_transition(0.4, 0.1).unwrap();
        let (a2, b2, q2) = sde.dense_transition(1.1, 0.4).unwrap();
        let (a, b, q) = sde.dense_transition(1.1, 0.1).unwrap();
        assert!((&a2 * &a1 - &a).amax() < 1e-12);
        assert!((&a2 * &b1 + &b2 - &b).amax() < 1e-12);
        assert!((&a2 * &q1 * a2.transpose() + &q2 - &q).amax() < 1e-12);
        let s = &sde.stationary_cov;
        assert!((&a * s * a.transpose() + &q - s).amax() < 1e-12);
        assert!((&a * sde.mean_vector() + &b - sde.mean_vector()).amax() < 1e-12);
    }
}

#[test]
fn zero_length_transition_is_identity_and_reversed_time_fails() {
    let sde = TemporalSde::matern(MaternFamily::FiveHalves, 1.0, 1.0).unwrap();
    let (a, b, q) = sde.dense_transition(2.0, 2.0).unwrap();
    assert_eq!(a, DMatrix::identity(3, 3));
    assert_eq!(b.amax(), 0.0);
    assert_eq!(q.amax(), 0.0);
    assert!(sde.dense_transition(1.0, 2.0).is_err());
}

#[test]
fn discretized_joint_prior_matches_space_time_kernel() {
    let g = gmp(5, MaternFamily::ThreeHalves);
    let times = [0.0, 0.2, 0.25, 0.9];
    let model = discretize_stsgmp(g.clone(), &times, &vec![None; 4], 0.1).unwrap();
    let (_, cov) = joint_prior(&model);
    let oracle = dense_joint_prior(&g, &times).unwrap();
    assert!((&cov - &oracle).amax() < 1e-12);

    let d = model.dim;
    for (i, &ti) in times.iter().enumerate() {
        for (j, &tj) in times.iter().enumerate() {
            for a in 0..5 {
                for b in 0..5 {
                    let k = MaternFamily::ThreeHalves.eval(ti - tj, 0.7, 1.4)
                        * MaternFamily::ThreeHalves.eval(0.37 * (a as f64 - b as f64), 0.9, 1.0);
                    assert!((cov[(i * d + a, j * d + b)] - k).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn transition_operators_match_kronecker_oracles() {
    let g = gmp(6, MaternFamily::FiveHalves);
    let tr = g.transition(0.5, 0.2).unwrap();
    let (a, _, q) = g.temporal.dense_transition(0.5, 0.2).unwrap();
    let gram = g.gram.to_dense();
    assert!((tr.a.to_dense() - a.kronecker(&DMatrix::identity(6, 6))).amax() < 1e-13);
    assert!((tr.q.to_dense() - q.kronecker(&gram)).amax() < 1e-13);
    let qs = tr.q_sqrt.unwrap().to_dense();
    assert!((&qs * qs.transpose() - q.kronecker(&gram)).amax() < 1e-10);
    let ms = g.marginal_sqrt(0.0).unwrap().to_dense();
    assert!((&ms * ms.transpose() - g.marginal_cov(0.0).to_dense()).amax() < 1e-10);
}

#[test]
fn observations_select_zeroth_derivative() {
    let g = gmp(4, MaternFamily::ThreeHalves);
    let model = discretize_stsgmp(g, &[0.0, 1.0], &[Some(vec![3, 1]), None], 0.2).unwrap();
    let obs = model.observations[0].as_ref().unwrap();
    let h = obs.h.to_dense();
    assert_eq!(h.shape(), (2, 8));
    assert_eq!(h[(0, 3)], 1.0);
    assert_eq!(h[(1, 1)], 1.0);
    assert_eq!(h.sum(), 2.0);
    assert!((obs.noise.to_dense() - DMatrix::identity(2, 2) * 0.04).amax() < 1e-15);
    assert!(model.observations[1].is_none());
}

#[test]
fn invalid_inputs_are_rejected() {
    let g = gmp(3, MaternFamily::Half);
    assert!(discretize_stsgmp(g.clone(), &[0.0, 0.0], &[None, None], 0.1).is_err());
    assert!(discretize_stsgmp(g.clone(), &[0.0, 1.0], &[None], 0.1).is_err());
    assert!(discretize_stsgmp(g.clone(), &[0.0], &[Some(vec![3])], 0.1).is_err());
    assert!(discretize_stsgmp(g.clone(), &[0.0], &[Some(vec![1, 1])], 0.1).is_err());
    assert!(discretize_stsgmp(g, &[0.0], &[None], -1.0).is_err());
    assert!(TemporalSde::matern(MaternFamily::Half, 0.0, 1.0).is_err());
    assert!(TemporalSde::from_nu(2.0, 1.0, 1.0).is_err());
    assert!(Kernel::euclidean(MaternFamily::Half, -1.0, 1.0, 1).is_err());
    let kernel = Kernel::euclidean(MaternFamily::Half, 1.0, 1.0, 1).unwrap();
    let dup = Arc::new(PointSet::new(1, vec![0.0, 1.0, 0.0]));
    let temporal = TemporalSde::matern(MaternFamily::Half, 1.0, 1.0).unwrap();
    assert!(SpaceTimeGmp::new(temporal, kernel, dup).is_err());
    assert!(kernel.eval(&[0.0, 1.0], &[0.0, 1.0]).is_err());
}

#[test]
fn sphere_geometry_uses_chordal_distance() {
    let k = Kernel::new(MaternFamily::Half, 1.0, 1.0, Geometry::Sphere { radius: 2.0 }).unwrap();
    assert!((k.distance(&[0.0, 0.0], &[0.0, 180.0]) - 4.0).abs() < 1e-12);
    assert!((k.distance(&[90.0, 0.0], &[90.0, 77.0])).abs() < 1e-12);
    assert!((k.distance(&[0.0, 0.0], &[0.0, 90.0]) - 8f64.sqrt()).abs() < 1e-12);
    let p = sphere_embed(30.0, 45.0, 1.0);
    assert!((p.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_matrices_are_positive_semidefinite(seed in any::<u64>(), n in 1usize..25, fam in 0usize..3, ell in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernel = Kernel::euclidean(FAMILIES[fam], ell, 1.0, 2).unwrap();
        let pts = Arc::new(PointSet::new(2, (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect()));
        let g = kernel.gram(pts.clone(), pts).unwrap().materialize();
        prop_assert!((&g - g.transpose()).amax() == 0.0);
        prop_assert!(g.symmetric_eigenvalues().min() >= -1e-10 * n as f64);
    }

    #[test]
    fn kernel_decreases_with_distance(fam in 0usize..3, r1 in 0.0f64..5.0, dr in 0.0f64..5.0) {
        let f = FAMILIES[fam];
        prop_assert!(f.eval(r1 + dr, 0.8, 1.2) <= f.eval(r1, 0.8, 1.2) + 1e-15);
        prop_assert!((f.eval(0.0, 0.8, 1.2) - 1.44).abs() < 1e-14);
    }
}
