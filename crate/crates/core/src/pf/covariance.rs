//! Noise covariance estimation and the block-tridiagonal covariance of differenced noise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::sequence::{ChangePointSet, FunctionalSequence};

const SHRINKAGE_WEIGHTS: [f64; 7] = [0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0];
const MAX_CONDITION: f64 = 1e8;
const ZERO_GUARD: f64 = 1e-12;
const DENSE_LIMIT: usize = 4000;
const PILOT_TRIM: f64 = 0.05;

/// Estimated per-curve noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovariance {
    pub sigma_hat: DMatrix<f64>,
    /// Weight on `(trace/d) I` in the shrunk estimate.
    pub shrinkage_weight: f64,
    /// Pooled within-segment covariance before shrinkage.
    pub pooled: DMatrix<f64>,
}

pub fn estimate_noise_covariance(seq: &FunctionalSequence, reps: &ChangePointSet) -> Result<NoiseCovariance> {
    estimate_noise_covariance_values(seq.values(), reps)
}

/// Segments used for estimation: segments with fewer than two curves join a neighbor.
pub fn estimation_segments(reps: &ChangePointSet, t_len: usize) -> Vec<(usize, usize)> {
    let mut merged: Vec<(usize, usize)> = Vec::new();
    let mut pending: Option<usize> = None;
    for (start, end) in reps.segments(t_len) {
        let start = pending.take().unwrap_or(start);
        if end + 1 - start < 2 {
            pending = Some(start);
        } else {
            merged.push((start, end));
        }
    }
    if let Some(start) = pending {
        match merged.last_mut() {
            Some(last) => last.1 = t_len,
            None => merged.push((start, t_len)),
        }
    }
    merged
}

/// Pooled within-segment covariance of the rows, shrunk until well conditioned.
pub fn estimate_noise_covariance_values(values: &DMatrix<f64>, reps: &ChangePointSet) -> Result<NoiseCovariance> {
    let (t_len, d) = values.shape();
    let segments = estimation_segments(reps, t_len);
    let dof = t_len.saturating_sub(segments.len());
    if dof < 2 {
        return Err(Error::TooFewCurves(dof));
    }
    let mut scatter = DMatrix::zeros(d, d);
    for (start, end) in segments {
        let rows = values.rows(start - 1, end + 1 - start);
        let mean = DVector::from_iterator(d, rows.column_iter().map(|c| c.mean()));
        let centered = DMatrix::from_fn(rows.nrows(), d, |r, c| rows[(r, c)] - mean[c]);
        scatter += centered.transpose() * &centered;
    }
    let sigma = symmetrize(&(scatter / dof as f64));
    Ok(shrink(sigma))
}

/// Change-agnostic covariance estimate from first differences.
///
/// Uses half the second moment of `f_t - f_{t-1}`, dropping the 5% of differences with the
/// largest norms so that mean jumps do not leak in. The overall scale is biased low by the
/// trimming; only the shape matters to scale-free consumers.
pub fn estimate_pilot_covariance(values: &DMatrix<f64>) -> Result<NoiseCovariance> {
    let (t_len, d) = values.shape();
    if t_len < 3 {
        return Err(Error::TooFewCurves(t_len));
    }
    let diffs = DMatrix::from_fn(t_len - 1, d, |t, j| values[(t + 1, j)] - values[(t, j)]);
    let mut order: Vec<(f64, usize)> = diffs.row_iter().enumerate().map(|(t, r)| (r.norm_squared(), t)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_trim = ((t_len - 1) as f64 * PILOT_TRIM).ceil() as usize;
    let kept = order.len().saturating_sub(n_trim).max(2);
    let mut scatter = DMatrix::zeros(d, d);
    for &(_, t) in &order[..kept] {
        let r = diffs.row(t);
        scatter += r.transpose() * r;
    }
    Ok(shrink(symmetrize(&(scatter / (2.0 * kept as f64)))))
}

fn shrink(sigma: DMatrix<f64>) -> NoiseCovariance {
    let d = sigma.nrows();
    let trace = sigma.trace();
    if !(trace > 0.0) {
        return NoiseCovariance {
            sigma_hat: DMatrix::identity(d, d) * ZERO_GUARD,
            shrinkage_weight: 1.0,
            pooled: sigma,
        };
    }
    let target = trace / d as f64;
    let (vals, _) = sym_eigen_desc(&sigma);
    let (max, min) = (vals[0], vals[d - 1]);
    for w in SHRINKAGE_WEIGHTS {
        let lo = (1.0 - w) * min + w * target;
        let hi = (1.0 - w) * max + w * target;
        if lo > 0.0 && hi / lo <= MAX_CONDITION {
            let sigma_hat = &sigma * (1.0 - w) + DMatrix::identity(d, d) * (w * target);
            return NoiseCovariance {
                sigma_hat,
                shrinkage_weight: w,
                pooled: sigma,
            };
        }
    }
    NoiseCovariance {
        sigma_hat: DMatrix::identity(d, d) * target,
        shrinkage_weight: 1.0,
        pooled: sigma,
    }
}

/// Covariance of the stacked differenced noise: `Sigma` at t = 1, `2 Sigma` after,
/// `-Sigma` on the neighboring off-diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaXi {
    sigma: DMatrix<f64>,
    t_len: usize,
}

pub fn build_sigma_xi_blocks(sigma: &DMatrix<f64>, t_len: usize) -> SigmaXi {
    SigmaXi {
        sigma: sigma.clone(),
        t_len,
    }
}

impl SigmaXi {
    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    /// Dimension `T d` of the operator.
    pub fn dim(&self) -> usize {
        self.t_len * self.sigma.nrows()
    }

    /// Block (i, j), 0-based time indices.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let d = self.sigma.nrows();
        match (i, j) {
            (0, 0) => self.sigma.clone(),
            _ if i == j => &self.sigma * 2.0,
            _ if i.abs_diff(j) == 1 => -&self.sigma,
            _ => DMatrix::zeros(d, d),
        }
    }

    /// Applies the operator to a stacked vector (time-major).
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.sigma.nrows();
        let mut out = DVector::zeros(self.dim());
        for t in 0..self.t_len {
            let mut acc = DVector::zeros(d);
            let coef = if t == 0 { 1.0 } else { 2.0 };
            acc += v.rows(t * d, d) * coef;
            if t > 0 {
                acc -= v.rows((t - 1) * d, d);
            }
            if t + 1 < self.t_len {
                acc -= v.rows((t + 1) * d, d);
            }
            out.rows_mut(t * d, d).copy_from(&(&self.sigma * acc));
        }
        out
    }

    /// Dense matrix; refused above 4000 rows.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > DENSE_LIMIT {
            return Err(Error::TooLargeToMaterialize(n));
        }
        let d = self.sigma.nrows();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..self.t_len {
            for j in i.saturating_sub(1)..(i + 2).min(self.t_len) {
                m.view_mut((i * d, j * d), (d, d)).copy_from(&self.block(i, j));
            }
        }
        Ok(m)
    }
}
