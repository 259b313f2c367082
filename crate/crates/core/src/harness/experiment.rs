//! Running methods on datasets and turning their output into result rows.

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, OutputFormat, SolverConfig};
use super::dataset::{obtain_dataset, Dataset};
use super::io::{atomic_write, csv_bytes, fmt_f64, json_bytes, serialize_csv};
use super::metrics::{avg_nld, mse};
use crate::baselines::{enkf_filter, etkf_filter, EnsembleRun, EtkfMode};
use crate::cakf::{cakf_filter, make_policy, CakfConfig, CakfTrace, StoppingRule, TruncationSchedule};
use crate::caks::{caks_smooth, posterior_sample, SmootherBound};
use crate::exact::{kalman_filter, matheron_sample, rts_smoother};
use crate::models::{DiscreteLgssm, ObservationData};
use crate::{Error, Result};

/// Output of one method on one dataset.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub method: Method,
    pub policy: String,
    pub rank: Option<usize>,
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub means: Vec<DVector<f64>>,
    pub variances: Vec<DVector<f64>>,
    pub wall_time_s: f64,
    pub peak_factor_columns: usize,
    /// `(step, residual norms)` of the iterative updates.
    pub residuals: Vec<(usize, Vec<f64>)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub policy: String,
    pub rank: Option<usize>,
    pub max_iterations: Option<usize>,
    pub seed: u64,
    /// Step index or `"aggregate"`.
    pub step: String,
    pub split: String,
    pub mse: f64,
    pub avg_nld: f64,
    pub wall_time_s: f64,
    pub peak_factor_columns: usize,
}

/// CAKF settings for rank parameter `r`.
pub fn cakf_config(solver: &SolverConfig, r: usize) -> CakfConfig {
    let mut cfg = CakfConfig::new(
        StoppingRule {
            max_iterations: solver.max_iterations.unwrap_or(r),
            atol: solver.atol,
            rtol: solver.rtol,
        },
        solver.truncation.unwrap_or(TruncationSchedule::Fixed { rank: r }),
    );
    cfg.scheme = solver.scheme;
    cfg
}

/// Seed of the ensemble generator for a given data seed.
pub fn ensemble_seed(solver_seed: u64, data_seed: u64) -> u64 {
    solver_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ data_seed
}

fn residual_history(trace: &CakfTrace) -> Vec<(usize, Vec<f64>)> {
    trace
        .steps
        .iter()
        .enumerate()
        .filter_map(|(k, s)| s.update.as_ref().map(|u| (k, u.residual_norms.clone())))
        .collect()
}

/// Run `method` with rank parameter `rank` (ignored by the exact methods).
///
/// `sqrt_seconds` is added to the wall time of the sampling-based ensemble methods, which reuse
/// a precomputed square root of the spatial Gramian.
pub fn run_method(
    solver: &SolverConfig,
    method: Method,
    rank: Option<usize>,
    model: &DiscreteLgssm,
    data: &ObservationData,
    data_seed: u64,
    sqrt_seconds: f64,
) -> Result<RunResult> {
    let n = model.num_states();
    let r = if method.is_exact() {
        None
    } else {
        Some(rank.ok_or_else(|| Error::Config(format!("{} needs a rank", method.label())))?)
    };
    let mut out = RunResult {
        method,
        policy: String::new(),
        rank: r,
        max_iterations: None,
        seed: data_seed,
        means: Vec::new(),
        variances: Vec::new(),
        wall_time_s: 0.0,
        peak_factor_columns: 0,
        residuals: Vec::new(),
        warnings: Vec::new(),
    };
    let start = Instant::now();
    match method {
        Method::Cakf | Method::Caks => {
            let r = r.unwrap_or(1);
            let cfg = cakf_config(solver, r);
            let mut policy = make_policy(&solver.policy);
            let trace = cakf_filter(model, data, policy.as_mut(), &cfg)?;
            out.policy = solver.policy.label().into();
            out.max_iterations = Some(cfg.stopping.max_iterations);
            out.peak_factor_columns = trace.peak_factor_columns();
            if method == Method::Cakf {
                out.means = trace.means();
                out.variances = (0..n).map(|k| trace.variances(model, k)).collect();
            } else {
                let smooth = caks_smooth(&trace, model, SmootherBound::FilterSchedule)?;
                out.variances = (0..n).map(|k| smooth.variances(model, k)).collect();
                out.peak_factor_columns = out
                    .peak_factor_columns
                    .max(smooth.factors.iter().map(|f| f.ncols()).max().unwrap_or(0));
                out.means = smooth.means;
            }
            out.wall_time_s = start.elapsed().as_secs_f64();
            out.residuals = residual_history(&trace);
            out.warnings = trace.warnings().cloned().collect();
        }
        Method::Kf | Method::Rts => {
            let trace = kalman_filter(model, data)?;
            let beliefs = if method == Method::Kf {
                trace.steps.into_iter().map(|s| s.updated).collect()
            } else {
                rts_smoother(&trace, model)?
            };
            out.wall_time_s = start.elapsed().as_secs_f64();
            out.variances = beliefs.iter().map(|b| b.variances()).collect();
            out.means = beliefs.into_iter().map(|b| b.mean).collect();
            out.peak_factor_columns = model.dim;
        }
        Method::Enkf | Method::EtkfS | Method::EtkfL => {
            let r = r.unwrap_or(2);
            let seed = ensemble_seed(
                solver.seed.ok_or_else(|| Error::Config("ensemble methods need solver.seed".into()))?,
                data_seed,
            );
            let run: EnsembleRun = match method {
                Method::Enkf => enkf_filter(model, data, r, seed)?,
                Method::EtkfS => etkf_filter(model, data, r, seed, EtkfMode::Sampled)?,
                _ => etkf_filter(model, data, r, seed, EtkfMode::Lanczos)?,
            };
            out.wall_time_s = run.wall_time_s + if method == Method::EtkfL { 0.0 } else { sqrt_seconds };
            out.peak_factor_columns = run.deviations.iter().map(|d| d.ncols()).max().unwrap_or(0);
            out.means = run.means;
            out.variances = run.variances;
            out.warnings = run.warnings;
        }
    }
    Ok(out)
}

/// Coordinates that make up each metric split.
pub fn splits(dataset: &Dataset) -> Vec<(&'static str, Vec<usize>)> {
    let truth_dim = dataset.truth.first().map_or(0, |u| u.len());
    let mut out = vec![
        ("train", dataset.train_points.clone()),
        ("test", dataset.test_points.clone()),
        ("all", (0..truth_dim).collect()),
    ];
    out.retain(|(_, idx)| !idx.is_empty());
    out
}

fn pick(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Per-step `(mse, avg_nld)` on a set of state coordinates.
pub fn step_metrics(run: &RunResult, dataset: &Dataset, idx: &[usize]) -> Result<Vec<(f64, f64)>> {
    (0..dataset.truth.len())
        .map(|k| {
            let t = pick(&dataset.truth[k], idx);
            let m = pick(&run.means[k], idx);
            let v = pick(&run.variances[k], idx);
            let nld = avg_nld(&t, &m, &v).map_err(|e| Error::Numerical(format!("{} step {k}: {e}", run.method.label())))?;
            Ok((mse(&t, &m)?, nld))
        })
        .collect()
}

/// Trajectory-averaged rows (and per-step rows if requested) for every split.
pub fn result_rows(run: &RunResult, dataset: &Dataset, per_step: bool) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    let row = |step: String, split: &str, mse: f64, nld: f64| ResultRow {
        method: run.method.label().into(),
        policy: run.policy.clone(),
        rank: run.rank,
        max_iterations: run.max_iterations,
        seed: run.seed,
        step,
        split: split.into(),
        mse,
        avg_nld: nld,
        wall_time_s: run.wall_time_s,
        peak_factor_columns: run.peak_factor_columns,
    };
    for (split, idx) in splits(dataset) {
        let m = step_metrics(run, dataset, &idx)?;
        let n = m.len() as f64;
        rows.push(row(
            "aggregate".into(),
            split,
            m.iter().map(|x| x.0).sum::<f64>() / n,
            m.iter().map(|x| x.1).sum::<f64>() / n,
        ));
        if per_step {
            for (k, (e, l)) in m.into_iter().enumerate() {
                rows.push(row(k.to_string(), split, e, l));
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunResult>,
    pub datasets: Vec<Dataset>,
}

/// Run every method over all ranks and replicate seeds of `config`.
///
/// Ranks below a method's minimum are skipped; the exact methods run once per seed.
pub fn run_experiment(config: &ExperimentConfig, methods: &[Method]) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    for seed in config.data.seeds() {
        let dataset = obtain_dataset(&config.model, &config.data, seed)?;
        let (gmp, model) = dataset.build_model(&config.model)?;
        let mut jobs: Vec<(Method, Option<usize>)> = Vec::new();
        for &m in methods {
            if m.is_exact() {
                jobs.push((m, None));
            } else {
                jobs.extend(config.solver.ranks.iter().filter(|&&r| r >= m.min_rank()).map(|&r| (m, Some(r))));
            }
        }
        let sqrt_seconds = if methods.iter().any(|m| matches!(m, Method::Enkf | Method::EtkfS)) {
            if let Some(l) = &model.initial_sqrt {
                l.apply_vec(&DVector::zeros(l.ncols()));
            }
            gmp.sqrt_seconds()
        } else {
            0.0
        };
        let runs: Vec<RunResult> = jobs
            .par_iter()
            .map(|&(m, r)| run_method(&config.solver, m, r, &model, &dataset.data, seed, sqrt_seconds))
            .collect::<Result<_>>()?;
        for run in &runs {
            out.rows.extend(result_rows(run, &dataset, config.output.per_step)?);
        }
        out.runs.extend(runs);
        out.datasets.push(dataset);
    }
    Ok(out)
}

/// Posterior sample trajectories from a single run of the configured method.
pub fn draw_samples(config: &ExperimentConfig, method: Method, dataset: &Dataset) -> Result<Vec<Vec<DVector<f64>>>> {
    let (_, model) = dataset.build_model(&config.model)?;
    let seed = config.solver.seed.unwrap_or(dataset.seed);
    let count = config.solver.samples;
    match method {
        Method::Cakf | Method::Caks => {
            let r = *config.solver.ranks.first().ok_or_else(|| Error::Config("solver.ranks is empty".into()))?;
            let mut policy = make_policy(&config.solver.policy);
            let trace = cakf_filter(&model, &dataset.data, policy.as_mut(), &cakf_config(&config.solver, r))?;
            (0..count as u64)
                .map(|i| {
                    posterior_sample(&trace, &model, &dataset.data, seed.wrapping_add(i), method == Method::Cakf)
                        .map(|s| s.states)
                })
                .collect()
        }
        Method::Rts => (0..count as u64)
            .map(|i| matheron_sample(&model, &dataset.data, seed.wrapping_add(i)))
            .collect(),
        m => Err(Error::Config(format!("sampling is not available for {}", m.label()))),
    }
}

/// Write result rows and the config sidecar into `dir`.
pub fn write_results(dir: &Path, format: OutputFormat, rows: &[ResultRow], config: &ExperimentConfig) -> Result<()> {
    match format {
        OutputFormat::Csv => atomic_write(&dir.join("results.csv"), &serialize_csv(rows)?)?,
        OutputFormat::Json => atomic_write(&dir.join("results.json"), &json_bytes(rows)?)?,
    }
    atomic_write(&dir.join("config.json"), &json_bytes(config)?)
}

/// Per-step means, standard deviations and residual histories of each run.
pub fn write_artifacts(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    for run in &output.runs {
        let tag = format!(
            "{}_r{}_seed{}",
            run.method.label(),
            run.rank.map_or("na".to_string(), |r| r.to_string()),
            run.seed
        );
        let truth_dim = output
            .datasets
            .iter()
            .find(|d| d.seed == run.seed)
            .and_then(|d| d.truth.first())
            .map_or(run.means.first().map_or(0, |m| m.len()), |u| u.len());
        let rows = run.means.iter().zip(&run.variances).enumerate().flat_map(|(k, (m, v))| {
            (0..truth_dim).map(move |i| {
                vec![
                    k.to_string(),
                    i.to_string(),
                    fmt_f64(m[i]),
                    fmt_f64(v[i].max(0.0).sqrt()),
                ]
            })
        });
        atomic_write(
            &dir.join(format!("states_{tag}.csv")),
            &csv_bytes(&["step_index", "state_index", "mean", "std"], rows)?,
        )?;
        if !run.residuals.is_empty() {
            let rows = run.residuals.iter().flat_map(|(k, norms)| {
                norms
                    .iter()
                    .enumerate()
                    .map(move |(i, v)| vec![k.to_string(), i.to_string(), fmt_f64(*v)])
            });
            atomic_write(
                &dir.join(format!("residuals_{tag}.csv")),
                &csv_bytes(&["step_index", "iteration", "residual_norm"], rows)?,
            )?;
        }
    }
    Ok(())
}

/// Medians over seeds of the aggregate rows of one `(method, rank, split)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub rank: Option<usize>,
    pub split: String,
    pub seeds: usize,
    pub median_mse: f64,
    pub median_avg_nld: f64,
    pub median_wall_time_s: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Option<usize>, String)> = Vec::new();
    for r in rows.iter().filter(|r| r.step == "aggregate") {
        let key = (r.method.clone(), r.rank, r.split.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, rank, split)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.step == "aggregate" && r.method == method && r.rank == rank && r.split == split)
                .collect();
            let col = |f: fn(&ResultRow) -> f64| median(&mut group.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                seeds: group.len(),
                median_mse: col(|r| r.mse),
                median_avg_nld: col(|r| r.avg_nld),
                median_wall_time_s: col(|r| r.wall_time_s),
                method,
                rank,
                split,
            }
        })
        .collect()
}
