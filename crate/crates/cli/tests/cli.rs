use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[model]
noise_std = 0.1

[data]
kind = "on_model"
seed = 2
points_per_dim = 12
extent = 6.0
horizon = 2.0
time_points = 10
train_times = 4
train_points_per_dim = 6

[solver]
method = "cakf"
ranks = [2, 4]
seed = 5
samples = 3
"#;

fn cakal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cakal")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn run_ok(args: &[&str]) -> Output {
    let out = cakal(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn filter_writes_results_and_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("f");
    let o = run_ok(&["filter", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("median_mse"));
    for f in ["results.csv", "summary.csv", "config.json", "states_cakf_r2_seed2.csv", "residuals_cakf_r4_seed2.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 2 * 3);
}

#[test]
fn json_format_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("s");
    run_ok(&["smooth", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "json", "--seed", "9"]);
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("results.json")).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["method"] == "caks" && r["seed"] == 9));
    assert!(out.join("summary.json").exists());
}

#[test]
fn generators_write_loadable_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let data = tmp.path().join("data");
    run_ok(&["generate-onmodel", "--config", &cfg, "--out", data.to_str().unwrap()]);
    for f in ["manifest.json", "observations.csv", "truth.csv"] {
        assert!(data.join(f).exists(), "missing {f}");
    }
    let again = tmp.path().join("again");
    run_ok(&["generate-onmodel", "--config", &cfg, "--out", again.to_str().unwrap()]);
    assert_eq!(
        std::fs::read(data.join("truth.csv")).unwrap(),
        std::fs::read(again.join("truth.csv")).unwrap()
    );

    let from_dir = format!(
        "[data]\nkind = \"directory\"\npath = {:?}\n\n[solver]\nmethod = \"kf\"\n",
        data.to_str().unwrap()
    );
    let cfg2 = write_config(tmp.path(), "d.toml", &from_dir);
    run_ok(&["benchmark", "--config", &cfg2, "--out", tmp.path().join("b").to_str().unwrap()]);

    let syn = write_config(
        tmp.path(),
        "syn.toml",
        "[data]\nkind = \"synthetic\"\ntrain_grid = [3, 4]\neval_grid = [5, 7]\n",
    );
    let sdir = tmp.path().join("syn");
    run_ok(&["generate-synthetic", "--config", &syn, "--out", sdir.to_str().unwrap()]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(sdir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["num_points"], 7);
    assert_eq!(manifest["num_steps"], 5);
}

#[test]
fn sample_and_compare_baselines() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let s = tmp.path().join("samples");
    run_ok(&["sample", "--config", &cfg, "--out", s.to_str().unwrap()]);
    let text = std::fs::read_to_string(s.join("samples.csv")).unwrap();
    // On-model truth covers both derivative blocks of the 12 points.
    assert_eq!(text.lines().count(), 1 + 3 * 10 * 24);

    let c = tmp.path().join("cmp");
    run_ok(&["compare-baselines", "--config", &cfg, "--out", c.to_str().unwrap()]);
    let summary = std::fs::read_to_string(c.join("summary.csv")).unwrap();
    for m in ["cakf", "enkf", "etkf_s", "etkf_l"] {
        assert!(summary.lines().any(|l| l.starts_with(&format!("{m},"))), "{m} missing");
    }
}

#[test]
fn config_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", &SMALL.replace("noise_std = 0.1", "noise_std = 0.1\nunknown = 3"));
    let out = tmp.path().join("o");
    let o = cakal(&["filter", "--config", &bad, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown"));

    let missing = cakal(&["filter", "--config", "/nonexistent.toml"]);
    assert_eq!(missing.status.code(), Some(2));

    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("seed = 5\n", ""));
    let o = cakal(&["compare-baselines", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(tmp.path(), "k.toml", &SMALL.replace("method = \"cakf\"", "method = \"enkf\""));
    let o = cakal(&["smooth", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = cakal(&["generate-synthetic", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    // Noise-free observations of every point leave zero posterior variance there.
    let text = SMALL
        .replace("noise_std = 0.1", "noise_std = 0.0")
        .replace("train_points_per_dim = 6", "train_points_per_dim = 12")
        .replace("method = \"cakf\"", "method = \"kf\"");
    let cfg = write_config(tmp.path(), "n.toml", &text);
    let o = cakal(&["filter", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
