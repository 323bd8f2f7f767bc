//! Merging of nearby candidates and CUSUM election of one representative per cluster.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sequence::{ChangePointSet, FunctionalSequence};

/// A maximal run of candidates whose consecutive gaps are at most kappa.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateCluster {
    pub members: Vec<usize>,
    /// Inclusive 1-based window `(lo, hi)` used for the CUSUM scan.
    pub window: (usize, usize),
}

impl CandidateCluster {
    pub fn min(&self) -> usize {
        self.members[0]
    }

    pub fn max(&self) -> usize {
        *self.members.last().expect("clusters are nonempty")
    }
}

/// Splits `candidates` into clusters and attaches election windows on 1..=t_len.
pub fn merge_candidates(candidates: &ChangePointSet, kappa: usize, t_len: usize) -> Vec<CandidateCluster> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for tau in candidates.iter() {
        match groups.last_mut() {
            Some(g) if tau - g[g.len() - 1] <= kappa => g.push(tau),
            _ => groups.push(vec![tau]),
        }
    }
    let n = groups.len();
    (0..n)
        .map(|i| {
            let min = groups[i][0];
            let max = groups[i][groups[i].len() - 1];
            let lo = if i == 0 { 1 } else { (groups[i - 1].last().unwrap() + min) / 2 };
            let hi = if i + 1 == n { t_len.max(max) } else { (max + groups[i + 1][0]).div_ceil(2) };
            CandidateCluster {
                members: groups[i].clone(),
                window: (lo.min(min - 1).max(1), hi),
            }
        })
        .collect()
}

/// Functional CUSUM `C(k)` over the inclusive window, with quadrature weights `w`.
pub fn cusum_statistic_values(
    values: &DMatrix<f64>,
    weights: &[f64],
    window: (usize, usize),
    k: usize,
) -> Result<f64> {
    let (lo, hi) = window;
    check_window(values, window)?;
    if k < lo || k >= hi {
        return Err(Error::InvalidArgument(format!("k = {k} outside [{lo}, {hi})")));
    }
    let profile = cusum_profile_values(values, weights, window)?;
    Ok(profile[k - lo])
}

pub fn cusum_statistic(seq: &FunctionalSequence, window: (usize, usize), k: usize) -> Result<f64> {
    cusum_statistic_values(seq.values(), &seq.grid().quadrature_weights(), window, k)
}

fn check_window(values: &DMatrix<f64>, (lo, hi): (usize, usize)) -> Result<()> {
    if lo < 1 || hi > values.nrows() || hi < lo {
        return Err(Error::InvalidArgument(format!(
            "window ({lo}, {hi}) outside 1..={}",
            values.nrows()
        )));
    }
    if hi - lo + 1 < 2 {
        return Err(Error::WindowTooSmall(hi - lo + 1));
    }
    Ok(())
}

/// CUSUM values for every `k` in `lo..hi` (entry 0 is `k = lo`).
pub fn cusum_profile_values(values: &DMatrix<f64>, weights: &[f64], window: (usize, usize)) -> Result<Vec<f64>> {
    check_window(values, window)?;
    if weights.len() != values.ncols() {
        return Err(Error::GridMismatch {
            grid: weights.len(),
            columns: values.ncols(),
        });
    }
    let (lo, hi) = window;
    let n = (hi - lo + 1) as f64;
    let d = values.ncols();
    let rows = lo - 1..hi;
    let mut total = vec![0.0; d];
    for t in rows.clone() {
        for j in 0..d {
            total[j] += values[(t, j)];
        }
    }
    let mut partial = vec![0.0; d];
    let mut out = Vec::with_capacity(hi - lo);
    for (i, t) in rows.take(hi - lo).enumerate() {
        for j in 0..d {
            partial[j] += values[(t, j)];
        }
        let frac = (i + 1) as f64 / n;
        let sq: f64 = (0..d)
            .map(|j| {
                let diff = partial[j] - frac * total[j];
                weights[j] * diff * diff
            })
            .sum();
        out.push(sq.sqrt() / n.sqrt());
    }
    Ok(out)
}

/// Representative of a cluster: the CUSUM maximizer plus one, smallest k on ties.
pub fn elect_representative_values(
    cluster: &CandidateCluster,
    values: &DMatrix<f64>,
    weights: &[f64],
) -> Result<usize> {
    if cluster.members.is_empty() {
        return Err(Error::InvalidArgument("empty cluster".into()));
    }
    if cluster.members.len() == 1 {
        return Ok(cluster.members[0]);
    }
    let t_len = values.nrows();
    let (lo, hi) = cluster.window;
    let profile = cusum_profile_values(values, weights, cluster.window)?;
    let k_lo = lo.max(cluster.min() - 1);
    let k_hi = (hi - 1).min(cluster.max());
    let mut best = (k_lo, f64::NEG_INFINITY);
    for k in k_lo..=k_hi {
        let c = profile[k - lo];
        if c > best.1 {
            best = (k, c);
        }
    }
    Ok((best.0 + 1).clamp(2, t_len))
}

pub fn elect_representative(cluster: &CandidateCluster, seq: &FunctionalSequence) -> Result<usize> {
    elect_representative_values(cluster, seq.values(), &seq.grid().quadrature_weights())
}

/// Elects representatives for all clusters of `candidates` under link parameter `kappa`.
pub fn refine(seq: &FunctionalSequence, candidates: &ChangePointSet, kappa: usize) -> Result<ChangePointSet> {
    let clusters = merge_candidates(candidates, kappa, seq.len());
    let weights = seq.grid().quadrature_weights();
    let reps = clusters
        .iter()
        .map(|c| elect_representative_values(c, seq.values(), &weights))
        .collect::<Result<Vec<_>>>()?;
    ChangePointSet::new(reps)
}
