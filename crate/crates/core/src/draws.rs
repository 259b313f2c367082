//! Sources of standard-normal draws. Samplers are written against [`DrawSource`] so that a
//! pinned source (all zeros) turns every sampler into its mean map.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub trait DrawSource {
    fn normal_vec(&mut self, n: usize) -> DVector<f64>;

    fn normal_mat(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, cols);
        for c in 0..cols {
            m.set_column(c, &self.normal_vec(rows));
        }
        m
    }
}

/// Seeded ChaCha8 stream.
pub struct RngDraws {
    rng: ChaCha8Rng,
}

impl RngDraws {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream derived from `(seed, stream)`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }
}

impl DrawSource for RngDraws {
    fn normal_vec(&mut self, n: usize) -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut self.rng)))
    }
}

/// Every draw is zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct PinnedDraws;

impl DrawSource for PinnedDraws {
    fn normal_vec(&mut self, n: usize) -> DVector<f64> {
        DVector::zeros(n)
    }
}
