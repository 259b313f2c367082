use std::path::Path;

use cakalman::harness::{
    avg_nld, generate_onmodel, generate_synthetic, mse, result_rows, run_experiment, run_method, summarize,
    write_results, DataConfig, Dataset, ExperimentConfig, Method, ModelConfig, OutputConfig, OutputFormat,
    SolverConfig,
};
use cakalman::Error;
use nalgebra::DVector;

fn small_onmodel(noise_std: f64) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig {
            noise_std,
            ..ModelConfig::default()
        },
        data: DataConfig::OnModel {
            seed: 3,
            replicates: 2,
            spatial_dims: 1,
            points_per_dim: 10,
            extent: 5.0,
            horizon: 2.0,
            time_points: 8,
            train_times: 4,
            train_points_per_dim: 6,
            train_time_seed: None,
        },
        solver: SolverConfig {
            seed: Some(1),
            ..SolverConfig::default()
        },
        output: OutputConfig::default(),
    }
}

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn metrics_on_worked_examples() {
    let truth = DVector::from_vec(vec![1.0, 2.0]);
    let mean = DVector::zeros(2);
    assert_eq!(mse(&truth, &mean).unwrap(), 2.5);
    let nld = avg_nld(&truth, &mean, &DVector::from_vec(vec![1.0, 4.0])).unwrap();
    assert!((nld - 1.7655121234846454).abs() < 1e-15);
    assert!(matches!(
        avg_nld(&truth, &mean, &DVector::from_vec(vec![1.0, 0.0])),
        Err(Error::Numerical(_))
    ));
    assert!(mse(&truth, &DVector::zeros(3)).is_err());
}

#[test]
fn shipped_configs_validate() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}

#[test]
fn config_errors_are_reported() {
    let base = std::fs::read_to_string(configs_dir().join("onmodel_compare.toml")).unwrap();
    let cases = [
        base.replace("noise_std = 0.1", "noise_std = 0.1\nbogus = 1"),
        base.replace("temporal_nu = 1.5", "temporal_nu = 2.0"),
        base.replace("train_times = 10", "train_times = 1000"),
        base.replace("method = \"cakf\"", "method = \"enkf\"").replace("seed = 7", ""),
        base.replace("method = \"cakf\"", "method = \"etkf_s\"").replace("ranks = [2, 8, 32]", "ranks = [1]"),
        base.replace("kind = \"on_model\"", "kind = \"spherical\""),
        base.replace("spatial_lengthscale = 0.5", "spatial_lengthscale = -0.5"),
    ];
    for (i, text) in cases.iter().enumerate() {
        assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "case {i}");
    }
    assert!(ExperimentConfig::from_toml(&base).is_ok());
    assert!(matches!(
        ExperimentConfig::load(Path::new("/nonexistent/config.toml")),
        Err(Error::Config(_))
    ));
}

#[test]
fn noiseless_onmodel_observations_equal_the_truth() {
    let cfg = small_onmodel(0.0);
    let ds = generate_onmodel(&cfg.model, &cfg.data, 3).unwrap();
    assert_eq!(ds.truth[0].len(), 20);
    assert_eq!(ds.observed_steps().len(), 4);
    for (k, y) in ds.data.iter().enumerate() {
        if let Some(y) = y {
            let idx = ds.plan[k].as_ref().unwrap();
            for (&j, v) in idx.iter().zip(y.iter()) {
                assert_eq!(*v, ds.truth[k][j]);
            }
        }
    }
    let mut all: Vec<usize> = ds.train_points.iter().chain(&ds.test_points).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
}

#[test]
fn datasets_are_deterministic_and_round_trip() {
    let cfg = small_onmodel(0.1);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_onmodel(&cfg.model, &cfg.data, 3).unwrap().write(a.path(), &cfg.model).unwrap();
    let ds = generate_onmodel(&cfg.model, &cfg.data, 3).unwrap();
    ds.write(b.path(), &cfg.model).unwrap();
    for f in ["observations.csv", "truth.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let other = generate_onmodel(&cfg.model, &cfg.data, 4).unwrap();
    assert_ne!(other.truth, ds.truth);

    let (back, manifest) = Dataset::load(a.path()).unwrap();
    assert_eq!(manifest.truth_dim, 20);
    assert_eq!(back.times, ds.times);
    assert_eq!(back.plan, ds.plan);
    assert_eq!(back.data, ds.data);
    assert_eq!(back.truth, ds.truth);
    assert_eq!(back.train_points, ds.train_points);
}

#[test]
fn synthetic_grid_is_the_union_of_train_and_eval() {
    let model = ModelConfig::default();
    let data: DataConfig = toml::from_str("kind = \"synthetic\"").unwrap();
    let ds = generate_synthetic(&model, &data, 0).unwrap();
    // 158 evaluation points plus the 14 interior training points not on that grid.
    assert_eq!(ds.points.len(), 172);
    assert_eq!(ds.train_points.len(), 16);
    assert_eq!(ds.test_points.len(), 156);
    assert_eq!(ds.times.len(), 51);
    assert_eq!(ds.observed_steps().len(), 11);
    let (_, lgssm) = ds.build_model(&model).unwrap();
    assert_eq!(lgssm.dim, 344);
    let x = ds.points.point(ds.train_points[5])[0];
    let k = ds.observed_steps()[3];
    let noise = ds.data[k].as_ref().unwrap()[5] - x.sin() * (-ds.times[k]).exp();
    assert!(noise.abs() < 0.6);
}

#[test]
fn lossless_cakf_rows_match_kalman_filter_rows() {
    let cfg = small_onmodel(0.1);
    let ds = generate_onmodel(&cfg.model, &cfg.data, 3).unwrap();
    let (_, model) = ds.build_model(&cfg.model).unwrap();
    let kf = run_method(&cfg.solver, Method::Kf, None, &model, &ds.data, 3, 0.0).unwrap();
    let ca = run_method(&cfg.solver, Method::Cakf, Some(20), &model, &ds.data, 3, 0.0).unwrap();
    let rk = result_rows(&kf, &ds, true).unwrap();
    let rc = result_rows(&ca, &ds, true).unwrap();
    assert_eq!(rk.len(), 3 * 9);
    for (a, b) in rk.iter().zip(&rc) {
        assert_eq!((&a.step, &a.split), (&b.step, &b.split));
        assert!((a.mse - b.mse).abs() <= 1e-8 * a.mse.max(1e-12), "{a:?} vs {b:?}");
        assert!((a.avg_nld - b.avg_nld).abs() <= 1e-6 * a.avg_nld.abs().max(1.0), "{a:?} vs {b:?}");
    }
}

#[test]
fn experiment_rows_are_reproducible() {
    let cfg = small_onmodel(0.1);
    let run = |c: &ExperimentConfig| {
        let out = run_experiment(c, &[Method::Cakf, Method::Enkf, Method::Kf]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_results(dir.path(), OutputFormat::Csv, &out.rows, c).unwrap();
        (out, std::fs::read_to_string(dir.path().join("results.csv")).unwrap())
    };
    let (out, first) = run(&cfg);
    let (_, second) = run(&cfg);
    let strip = |s: &str| -> Vec<String> {
        s.lines()
            .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 9).map(|(_, f)| f).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert!(first.starts_with("method,policy,rank,max_iterations,seed,step,split,mse,avg_nld,wall_time_s"));
    assert_eq!(strip(&first), strip(&second));
    // Two seeds x (cakf, enkf, kf) x three splits.
    assert_eq!(out.rows.len(), 2 * 3 * 3);
    let summary = summarize(&out.rows);
    assert_eq!(summary.len(), 9);
    assert!(summary.iter().all(|s| s.seeds == 2));
}
