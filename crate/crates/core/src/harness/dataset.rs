//! Dataset generation, storage and loading.
//!
//! A dataset directory holds `manifest.json`, `observations.csv`
//! (`step_index,time,x0,…,value`) and `truth.csv` (`step_index,state_index,value`).

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DataConfig, ModelConfig};
use super::io::{atomic_write, csv_bytes, csv_err, fmt_f64, json_bytes};
use crate::draws::{DrawSource, RngDraws};
use crate::exact::DEFAULT_DENSE_CAP;
use crate::linops::PointSet;
use crate::models::{discretize_stsgmp, DiscreteLgssm, ObservationData, SpaceTimeGmp};
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const OBSERVATIONS: &str = "observations.csv";
pub const TRUTH: &str = "truth.csv";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub kind: String,
    pub seed: u64,
    pub times: Vec<f64>,
    pub points: PointSet,
    /// Observed spatial indices per step.
    pub plan: Vec<Option<Vec<usize>>>,
    pub data: ObservationData,
    /// Ground truth of the leading `truth[k].len()` state coordinates at every step.
    pub truth: Vec<DVector<f64>>,
    pub train_points: Vec<usize>,
    pub test_points: Vec<usize>,
    /// Wall time of the dense spatial square root used for sampling, if any.
    pub sqrt_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub kind: String,
    pub seed: u64,
    pub spatial_dim: usize,
    pub num_points: usize,
    pub num_steps: usize,
    pub truth_dim: usize,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub observed_steps: Vec<usize>,
    pub train_points: Vec<usize>,
    pub test_points: Vec<usize>,
    pub sqrt_seconds: f64,
    pub model: ModelConfig,
    pub observations: String,
    pub truth: String,
}

/// `n` evenly spaced points on `[0, hi]`.
pub fn linspace(hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
}

/// Regular grid in `dims` dimensions, last coordinate fastest.
fn regular_grid(axis: &[f64], dims: usize) -> PointSet {
    let n = axis.len();
    let total = n.pow(dims as u32);
    let mut coords = Vec::with_capacity(total * dims);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = vec![0.0; dims];
        for d in (0..dims).rev() {
            p[d] = axis[rem % n];
            rem /= n;
        }
        coords.extend(p);
    }
    PointSet::new(dims, coords)
}

/// Sorted union of two grids; returns the merged values and the positions of `a`'s entries.
fn merge_axes(a: &[f64], b: &[f64], tol: f64) -> (Vec<f64>, Vec<usize>) {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(|x, y| x.total_cmp(y));
    let mut merged: Vec<f64> = Vec::new();
    for v in all {
        if merged.last().is_none_or(|&l| v - l > tol) {
            merged.push(v);
        }
    }
    let pos = a
        .iter()
        .map(|&v| {
            merged
                .iter()
                .position(|&m| (m - v).abs() <= tol)
                .expect("merged axis contains every input")
        })
        .collect();
    (merged, pos)
}

/// `f⋆(t, x) = sin(x) exp(−t)`.
pub fn synthetic_target(t: f64, x: f64) -> f64 {
    x.sin() * (-t).exp()
}

pub fn build_gmp(model: &ModelConfig, points: &PointSet) -> Result<Arc<SpaceTimeGmp>> {
    Ok(Arc::new(SpaceTimeGmp::new(
        model.temporal()?,
        model.spatial(points.dim)?,
        Arc::new(points.clone()),
    )?))
}

impl Dataset {
    pub fn num_states(&self) -> usize {
        self.times.len()
    }

    pub fn build_model(&self, model: &ModelConfig) -> Result<(Arc<SpaceTimeGmp>, DiscreteLgssm)> {
        let gmp = build_gmp(model, &self.points)?;
        let lgssm = discretize_stsgmp(gmp.clone(), &self.times, &self.plan, model.noise_std)?;
        Ok((gmp, lgssm))
    }

    pub fn observed_steps(&self) -> Vec<usize> {
        (0..self.plan.len()).filter(|&k| self.plan[k].is_some()).collect()
    }

    pub fn write(&self, dir: &Path, model: &ModelConfig) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let dim = self.points.dim;
        let mut header: Vec<String> = vec!["step_index".into(), "time".into()];
        header.extend((0..dim).map(|d| format!("x{d}")));
        header.push("value".into());
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut obs_rows = Vec::new();
        for (k, (idx, y)) in self.plan.iter().zip(&self.data).enumerate() {
            if let (Some(idx), Some(y)) = (idx, y) {
                for (&j, v) in idx.iter().zip(y.iter()) {
                    let mut row = vec![k.to_string(), fmt_f64(self.times[k])];
                    row.extend(self.points.point(j).iter().map(|&c| fmt_f64(c)));
                    row.push(fmt_f64(*v));
                    obs_rows.push(row);
                }
            }
        }
        let truth_rows = self.truth.iter().enumerate().flat_map(|(k, u)| {
            u.iter()
                .enumerate()
                .map(move |(i, v)| vec![k.to_string(), i.to_string(), fmt_f64(*v)])
        });
        let manifest = Manifest {
            kind: self.kind.clone(),
            seed: self.seed,
            spatial_dim: dim,
            num_points: self.points.len(),
            num_steps: self.times.len(),
            truth_dim: self.truth.first().map_or(0, |u| u.len()),
            times: self.times.clone(),
            points: (0..self.points.len()).map(|j| self.points.point(j).to_vec()).collect(),
            observed_steps: self.observed_steps(),
            train_points: self.train_points.clone(),
            test_points: self.test_points.clone(),
            sqrt_seconds: self.sqrt_seconds,
            model: model.clone(),
            observations: OBSERVATIONS.into(),
            truth: TRUTH.into(),
        };
        atomic_write(&dir.join(OBSERVATIONS), &csv_bytes(&header_refs, obs_rows)?)?;
        atomic_write(
            &dir.join(TRUTH),
            &csv_bytes(&["step_index", "state_index", "value"], truth_rows)?,
        )?;
        atomic_write(&dir.join(MANIFEST), &json_bytes(&manifest)?)
    }

    pub fn load(dir: &Path) -> Result<(Self, Manifest)> {
        let text = std::fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| Error::Config(format!("cannot read dataset manifest in {}: {e}", dir.display())))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        if m.points.len() != m.num_points || m.times.len() != m.num_steps {
            return Err(Error::Serde("manifest sizes disagree with its grids".into()));
        }
        if m.points.iter().any(|p| p.len() != m.spatial_dim) {
            return Err(Error::Serde("manifest point has the wrong dimension".into()));
        }
        let points = PointSet::from_rows(&m.points);
        let lookup: HashMap<Vec<u64>, usize> = (0..points.len())
            .map(|j| (points.point(j).iter().map(|c| c.to_bits()).collect(), j))
            .collect();
        let n = m.num_steps;
        let mut plan: Vec<Option<Vec<usize>>> = vec![None; n];
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); n];
        let mut rdr = csv::Reader::from_path(dir.join(&m.observations)).map_err(csv_err)?;
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != m.spatial_dim + 3 {
                return Err(Error::Serde(format!("observation row has {} fields", rec.len())));
            }
            let k: usize = parse(&rec[0])?;
            if k >= n {
                return Err(Error::Serde(format!("observation step {k} out of range")));
            }
            let coords: Vec<u64> = (0..m.spatial_dim)
                .map(|d| parse::<f64>(&rec[2 + d]).map(f64::to_bits))
                .collect::<Result<_>>()?;
            let j = *lookup
                .get(&coords)
                .ok_or_else(|| Error::Serde(format!("observation at step {k} is not on the spatial grid")))?;
            plan[k].get_or_insert_with(Vec::new).push(j);
            values[k].push(parse(&rec[m.spatial_dim + 2])?);
        }
        let data: ObservationData = plan
            .iter()
            .zip(values)
            .map(|(p, v)| p.as_ref().map(|_| DVector::from_vec(v)))
            .collect();
        let mut truth = vec![DVector::zeros(m.truth_dim); n];
        let mut rdr = csv::Reader::from_path(dir.join(&m.truth)).map_err(csv_err)?;
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let k: usize = parse(&rec[0])?;
            let i: usize = parse(&rec[1])?;
            if k >= n || i >= m.truth_dim {
                return Err(Error::Serde(format!("truth entry ({k}, {i}) out of range")));
            }
            truth[k][i] = parse(&rec[2])?;
        }
        let ds = Dataset {
            kind: m.kind.clone(),
            seed: m.seed,
            times: m.times.clone(),
            points,
            plan,
            data,
            truth,
            train_points: m.train_points.clone(),
            test_points: m.test_points.clone(),
            sqrt_seconds: m.sqrt_seconds,
        };
        Ok((ds, m))
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Serde(format!("cannot parse field {s:?}")))
}

/// Draw a ground-truth trajectory from the discretized prior and noisy training data.
pub fn generate_onmodel(model: &ModelConfig, data: &DataConfig, seed: u64) -> Result<Dataset> {
    let DataConfig::OnModel {
        spatial_dims,
        points_per_dim,
        extent,
        horizon,
        time_points,
        train_times,
        train_points_per_dim,
        train_time_seed,
        ..
    } = data
    else {
        return Err(Error::Config("on-model generation needs data.kind = \"on_model\"".into()));
    };
    let points = regular_grid(&linspace(*extent, *points_per_dim), *spatial_dims);
    if points.len() > DEFAULT_DENSE_CAP {
        return Err(Error::TooLarge {
            what: "spatial points for the dense square root",
            size: points.len(),
            cap: DEFAULT_DENSE_CAP,
        });
    }
    let times = linspace(*horizon, *time_points);
    let mut rng = ChaCha8Rng::seed_from_u64(train_time_seed.unwrap_or(seed));
    let mut observed: Vec<usize> = sample(&mut rng, times.len(), *train_times).into_vec();
    observed.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_train = train_points_per_dim.pow(*spatial_dims as u32);
    let mut train: Vec<usize> = sample(&mut rng, points.len(), n_train).into_vec();
    train.sort_unstable();
    let train_set: BTreeSet<usize> = train.iter().copied().collect();
    let test: Vec<usize> = (0..points.len()).filter(|j| !train_set.contains(j)).collect();
    let mut plan = vec![None; times.len()];
    for &k in &observed {
        plan[k] = Some(train.clone());
    }

    let gmp = build_gmp(model, &points)?;
    let lgssm = discretize_stsgmp(gmp.clone(), &times, &plan, model.noise_std)?;
    let mut draws = RngDraws::with_stream(seed, 1);
    let init = lgssm
        .initial_sqrt
        .as_ref()
        .ok_or_else(|| Error::invalid("model lacks an initial square root"))?;
    let mut u = &lgssm.initial_mean + init.apply_vec(&draws.normal_vec(init.ncols()));
    let mut truth = Vec::with_capacity(times.len());
    let mut obs = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        if k > 0 {
            let tr = &lgssm.transitions[k - 1];
            let q = tr
                .q_sqrt
                .as_ref()
                .ok_or_else(|| Error::invalid("transition lacks a noise square root"))?;
            u = tr.a.apply_vec(&u) + &tr.b + q.apply_vec(&draws.normal_vec(q.ncols()));
        }
        obs.push(plan[k].as_ref().map(|idx: &Vec<usize>| {
            DVector::from_iterator(idx.len(), idx.iter().map(|&j| u[j])) + draws.normal_vec(idx.len()) * model.noise_std
        }));
        truth.push(u.clone());
    }
    Ok(Dataset {
        kind: "on_model".into(),
        seed,
        times,
        points,
        plan,
        data: obs,
        truth,
        train_points: train,
        test_points: test,
        sqrt_seconds: gmp.sqrt_seconds(),
    })
}

/// Noisy `sin(x) exp(−t)` on a training grid; the state grid is the union of the training and
/// evaluation grids.
pub fn generate_synthetic(model: &ModelConfig, data: &DataConfig, seed: u64) -> Result<Dataset> {
    let DataConfig::Synthetic {
        train_grid,
        eval_grid,
        t_max,
        x_max,
        ..
    } = data
    else {
        return Err(Error::Config("synthetic generation needs data.kind = \"synthetic\"".into()));
    };
    let (times, train_t) = merge_axes(&linspace(*t_max, train_grid[0]), &linspace(*t_max, eval_grid[0]), 1e-9 * t_max);
    let (xs, train_x) = merge_axes(&linspace(*x_max, train_grid[1]), &linspace(*x_max, eval_grid[1]), 1e-9 * x_max);
    let points = PointSet::new(1, xs.clone());
    let train_set: BTreeSet<usize> = train_x.iter().copied().collect();
    let test: Vec<usize> = (0..xs.len()).filter(|j| !train_set.contains(j)).collect();
    let mut draws = RngDraws::new(seed);
    let mut plan = vec![None; times.len()];
    let mut obs = vec![None; times.len()];
    for &k in &train_t {
        let noise = draws.normal_vec(train_x.len()) * model.noise_std;
        obs[k] = Some(DVector::from_iterator(
            train_x.len(),
            train_x.iter().map(|&j| synthetic_target(times[k], xs[j])),
        ) + noise);
        plan[k] = Some(train_x.clone());
    }
    let truth = times
        .iter()
        .map(|&t| DVector::from_iterator(xs.len(), xs.iter().map(|&x| synthetic_target(t, x))))
        .collect();
    Ok(Dataset {
        kind: "synthetic".into(),
        seed,
        times,
        points,
        plan,
        data: obs,
        truth,
        train_points: train_x,
        test_points: test,
        sqrt_seconds: 0.0,
    })
}

/// Generate (or load) the dataset for one replicate seed.
pub fn obtain_dataset(model: &ModelConfig, data: &DataConfig, seed: u64) -> Result<Dataset> {
    match data {
        DataConfig::OnModel { .. } => generate_onmodel(model, data, seed),
        DataConfig::Synthetic { .. } => generate_synthetic(model, data, seed),
        DataConfig::Directory { path } => Ok(Dataset::load(path)?.0),
    }
}
