#![allow(dead_code)]

use std::sync::Arc;

use cakalman::dense::symmetrize;
use cakalman::draws::{DrawSource, RngDraws};
use cakalman::linops::PointSet;
use cakalman::models::{
    discretize_stsgmp, DenseStep, DiscreteLgssm, Kernel, MaternFamily, ObservationData, SpaceTimeGmp, TemporalSde,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn spd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    symmetrize(&(&b * b.transpose() / d as f64 + DMatrix::identity(d, d) * ridge))
}

/// Random dense model with `n + 1` states; roughly a third of the steps are unobserved.
pub fn random_model(seed: u64, d: usize, n: usize) -> (DiscreteLgssm, ObservationData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mu0 = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let sigma0 = spd(&mut rng, d, 0.5);
    let mut steps = Vec::new();
    for _ in 0..n {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0)) / (d as f64).sqrt() * 0.9;
        let b = DVector::from_fn(d, |_, _| rng.random_range(-0.2..0.2));
        let q = spd(&mut rng, d, 0.1);
        steps.push(DenseStep { a, b, q });
    }
    let mut obs = Vec::new();
    for k in 0..=n {
        if k > 0 && rng.random_bool(0.3) {
            obs.push(None);
            continue;
        }
        let m = rng.random_range(1..=d);
        let h = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
        let l = spd(&mut rng, m, 0.05);
        obs.push(Some((h, l)));
    }
    let model = DiscreteLgssm::dense(mu0, sigma0, steps, obs).unwrap();
    let data = sample_data(&model, seed ^ 0xdead);
    (model, data)
}

/// Observations drawn from the model's own prior.
pub fn sample_data(model: &DiscreteLgssm, seed: u64) -> ObservationData {
    let mut draws = RngDraws::new(seed);
    let l0 = cakalman::dense::psd_sqrt(&model.initial_cov.to_dense());
    let mut u = &model.initial_mean + &l0 * draws.normal_vec(model.dim);
    let mut data = Vec::new();
    for k in 0..model.num_states() {
        if k > 0 {
            let tr = &model.transitions[k - 1];
            let lq = cakalman::dense::psd_sqrt(&tr.q.to_dense());
            u = tr.a.apply_vec(&u) + &tr.b + &lq * draws.normal_vec(model.dim);
        }
        data.push(model.observations[k].as_ref().map(|o| {
            let ln = cakalman::dense::psd_sqrt(&o.noise.to_dense());
            o.h.apply_vec(&u) + &ln * draws.normal_vec(o.dim())
        }));
    }
    data
}

/// Joint prior over the stacked states `(u_0, …, u_n)`.
pub fn joint_prior(model: &DiscreteLgssm) -> (DVector<f64>, DMatrix<f64>) {
    let d = model.dim;
    let n = model.num_states();
    let mut mean = DVector::zeros(d * n);
    let mut cov = DMatrix::zeros(d * n, d * n);
    let sig: Vec<DMatrix<f64>> = (0..n).map(|k| model.marginal_covs[k].to_dense()).collect();
    for i in 0..n {
        mean.rows_mut(i * d, d).copy_from(&model.marginal_means[i]);
        let mut phi = DMatrix::identity(d, d);
        for j in i..n {
            if j > i {
                phi = model.transitions[j - 1].a.to_dense() * phi;
            }
            let c = &phi * &sig[i];
            cov.view_mut((j * d, i * d), (d, d)).copy_from(&c);
            cov.view_mut((i * d, j * d), (d, d)).copy_from(&c.transpose());
        }
    }
    (mean, cov)
}

/// Mean and covariance of every state given the observations at steps `≤ upto`.
pub fn condition(model: &DiscreteLgssm, data: &ObservationData, upto: usize) -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let d = model.dim;
    let n = model.num_states();
    let (mean, cov) = joint_prior(model);
    let mut rows: Vec<DMatrix<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut noises: Vec<DMatrix<f64>> = Vec::new();
    for k in 0..=upto {
        if let (Some(o), Some(y)) = (&model.observations[k], &data[k]) {
            let h = o.h.to_dense();
            let mut row = DMatrix::zeros(h.nrows(), d * n);
            row.view_mut((0, k * d), (h.nrows(), d)).copy_from(&h);
            rows.push(row);
            let yc = o.centered(y);
            ys.extend(yc.iter());
            noises.push(o.noise.to_dense());
        }
    }
    let (post_mean, post_cov) = if rows.is_empty() {
        (mean, cov)
    } else {
        let m: usize = rows.iter().map(|r| r.nrows()).sum();
        let mut hh = DMatrix::zeros(m, d * n);
        let mut ll = DMatrix::zeros(m, m);
        let mut off = 0;
        for (r, l) in rows.iter().zip(&noises) {
            hh.rows_mut(off, r.nrows()).copy_from(r);
            ll.view_mut((off, off), (l.nrows(), l.nrows())).copy_from(l);
            off += r.nrows();
        }
        let y = DVector::from_vec(ys);
        let s = &hh * &cov * hh.transpose() + ll;
        let lu = s.clone().lu();
        let cross = &cov * hh.transpose();
        let gain_t = lu.solve(&cross.transpose()).unwrap();
        let pm = &mean + gain_t.transpose() * (y - &hh * &mean);
        let pc = &cov - gain_t.transpose() * cross.transpose();
        (pm, pc)
    };
    (0..n)
        .map(|k| {
            (
                post_mean.rows(k * d, d).into_owned(),
                post_cov.view((k * d, k * d), (d, d)).into_owned(),
            )
        })
        .collect()
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    cakalman::dense::rel_err(a, b)
}

pub fn relv(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    cakalman::dense::rel_err_vec(a, b)
}

/// Small space-time Matérn-3/2 × Matérn-3/2 model on 1-D points with observed plan.
pub struct SpaceTimeSetup {
    pub gmp: Arc<SpaceTimeGmp>,
    pub times: Vec<f64>,
    pub plan: Vec<Option<Vec<usize>>>,
    pub model: DiscreteLgssm,
    pub data: ObservationData,
    pub noise_std: f64,
}

pub fn spacetime_setup(seed: u64, nx: usize, n_times: usize, noise_std: f64) -> SpaceTimeSetup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let temporal = TemporalSde::matern(MaternFamily::ThreeHalves, 0.8, 1.0).unwrap();
    let kernel = Kernel::euclidean(MaternFamily::ThreeHalves, 0.7, 1.0, 1).unwrap();
    let pts = Arc::new(PointSet::new(1, (0..nx).map(|i| i as f64 * 0.37).collect()));
    let gmp = Arc::new(SpaceTimeGmp::new(temporal, kernel, pts).unwrap());
    let mut t = 0.0;
    let times: Vec<f64> = (0..n_times)
        .map(|_| {
            t += rng.random_range(0.1..0.4);
            t
        })
        .collect();
    let plan: Vec<Option<Vec<usize>>> = (0..n_times)
        .map(|k| {
            if k > 0 && rng.random_bool(0.2) {
                None
            } else {
                let m = rng.random_range(1..=nx.min(6));
                let mut idx: Vec<usize> = (0..nx).collect();
                for i in 0..m {
                    let j = rng.random_range(i..nx);
                    idx.swap(i, j);
                }
                idx.truncate(m);
                Some(idx)
            }
        })
        .collect();
    let model = discretize_stsgmp(gmp.clone(), &times, &plan, noise_std).unwrap();
    let data = sample_data(&model, seed + 17);
    SpaceTimeSetup {
        gmp,
        times,
        plan,
        model,
        data,
        noise_std,
    }
}
