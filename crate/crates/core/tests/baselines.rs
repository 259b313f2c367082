mod common;

use cakalman::baselines::{enkf_filter, etkf_filter, etkf_update, EtkfMode};
use cakalman::exact::kalman_filter;
use common::{random_model, rel, relv};
use nalgebra::DMatrix;

#[test]
fn lanczos_etkf_with_full_ensemble_is_the_kalman_filter() {
    for seed in 0..5 {
        let (model, data) = random_model(seed, 5, 6);
        let kf = kalman_filter(&model, &data).unwrap();
        let run = etkf_filter(&model, &data, 5, seed, EtkfMode::Lanczos).unwrap();
        for (k, step) in kf.steps.iter().enumerate() {
            let dev = &run.deviations[k];
            assert!(relv(&run.means[k], &step.updated.mean) < 1e-6, "seed {seed} step {k}");
            assert!(rel(&(dev * dev.transpose()), &step.updated.cov) < 1e-6, "seed {seed} step {k}");
        }
        let capped = etkf_filter(&model, &data, 50, seed, EtkfMode::Lanczos).unwrap();
        assert_eq!(capped.deviations[0].ncols(), 5);
    }
}

#[test]
fn transform_update_is_exact_for_an_exact_square_root() {
    let (model, data) = random_model(21, 4, 1);
    let kf = kalman_filter(&model, &data).unwrap();
    let prior = &kf.steps[0].predicted;
    let dev = prior.cov.clone().cholesky().unwrap().l();
    let obs = model.observations[0].as_ref().unwrap();
    let (mean, out, _) = etkf_update(&prior.mean, &dev, obs, data[0].as_ref().unwrap(), 0).unwrap();
    assert!(relv(&mean, &kf.steps[0].updated.mean) < 1e-12);
    assert!(rel(&(&out * out.transpose()), &kf.steps[0].updated.cov) < 1e-12);
}

#[test]
fn large_ensembles_approach_the_kalman_filter() {
    let (model, data) = random_model(3, 3, 4);
    let kf = kalman_filter(&model, &data).unwrap();
    let enkf = enkf_filter(&model, &data, 20_000, 1).unwrap();
    let etkf = etkf_filter(&model, &data, 1_000, 1, EtkfMode::Sampled).unwrap();
    for (k, step) in kf.steps.iter().enumerate() {
        let sd = step.updated.cov.diagonal().map(f64::sqrt);
        for (run, tol) in [(&enkf, 0.1), (&etkf, 0.25)] {
            let z = (&run.means[k] - &step.updated.mean).component_div(&sd).amax();
            assert!(z < tol, "step {k}: mean off by {z} standard deviations");
            let ratio = run.variances[k].component_div(&step.updated.cov.diagonal());
            assert!(ratio.iter().all(|r| (r - 1.0).abs() < tol), "step {k}: {ratio:?}");
        }
    }
}

#[test]
fn runs_are_deterministic_in_the_seed() {
    let (model, data) = random_model(4, 4, 3);
    let a = enkf_filter(&model, &data, 6, 9).unwrap();
    let b = enkf_filter(&model, &data, 6, 9).unwrap();
    let c = enkf_filter(&model, &data, 6, 10).unwrap();
    assert_eq!(a.means, b.means);
    assert_ne!(a.means, c.means);
    let a = etkf_filter(&model, &data, 6, 9, EtkfMode::Sampled).unwrap();
    let b = etkf_filter(&model, &data, 6, 9, EtkfMode::Sampled).unwrap();
    assert_eq!(a.deviations, b.deviations);
}

#[test]
fn ensemble_statistics_are_consistent() {
    let (model, data) = random_model(5, 6, 4);
    let run = etkf_filter(&model, &data, 4, 2, EtkfMode::Sampled).unwrap();
    for (dev, var) in run.deviations.iter().zip(&run.variances) {
        assert_eq!(dev.ncols(), 4);
        let cov: DMatrix<f64> = dev * dev.transpose();
        assert!((cov.diagonal() - var).amax() < 1e-12);
        // Deviations stay centred through the symmetric transform.
        assert!(dev.column_sum().amax() < 1e-10);
    }
    assert_eq!(run.means.len(), model.num_states());
}

#[test]
fn too_small_ensembles_are_rejected() {
    let (model, data) = random_model(6, 3, 2);
    assert!(enkf_filter(&model, &data, 1, 0).is_err());
    assert!(etkf_filter(&model, &data, 1, 0, EtkfMode::Sampled).is_err());
    assert!(etkf_filter(&model, &data, 1, 0, EtkfMode::Lanczos).is_ok());
}
