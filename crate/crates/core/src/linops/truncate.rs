//! Rank truncation of low-rank downdate factors.

use nalgebra::DMatrix;

/// Tall factor `M` representing the subtrahend `M Mᵀ` of a downdated covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DowndateFactor {
    pub m: DMatrix<f64>,
}

impl DowndateFactor {
    pub fn empty(dim: usize) -> Self {
        Self {
            m: DMatrix::zeros(dim, 0),
        }
    }

    pub fn rank(&self) -> usize {
        self.m.ncols()
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }
}

/// Result of [`truncate_downdate`]: `kept keptᵀ + dropped droppedᵀ = M Mᵀ`.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub kept: DMatrix<f64>,
    pub dropped: DMatrix<f64>,
}

/// Relative singular-value floor below which directions are always dropped.
pub const RANK_FLOOR: f64 = 1e-12;

/// Keep the top `max_rank` left singular directions of `m`, scaled by their singular values.
///
/// Works on a thin QR of `m` followed by an SVD of the small triangular factor. If `m` already
/// has at most `max_rank` columns it is returned unchanged.
pub fn truncate_downdate(m: &DMatrix<f64>, max_rank: usize) -> Truncation {
    let (d, r) = m.shape();
    if r <= max_rank {
        return Truncation {
            kept: m.clone(),
            dropped: DMatrix::zeros(d, 0),
        };
    }
    // Left basis Q and small core R with m = Q R.
    let (q, core) = if d > r {
        let qr = m.clone().qr();
        (qr.q(), qr.r())
    } else {
        (DMatrix::identity(d, d), m.clone())
    };
    let svd = core.svd(true, false);
    let u = svd.u.expect("svd with u requested");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let smax = order.first().map_or(0.0, |&i| sv[i]);
    let numerical = order
        .iter()
        .take_while(|&&i| smax > 0.0 && sv[i] > RANK_FLOOR * smax)
        .count();
    let keep = max_rank.min(numerical);
    let left = &q * &u;
    let scaled = |cols: &[usize]| {
        DMatrix::from_fn(d, cols.len(), |row, c| left[(row, cols[c])] * sv[cols[c]])
    };
    Truncation {
        kept: scaled(&order[..keep]),
        dropped: scaled(&order[keep..]),
    }
}
