//! Partial F-tests for each elected representative.
//!
//! The full model on the differenced scale has a free initial level (one column per grid
//! point at t = 1, which also absorbs any constant offset of the curves) and one K-column
//! basis block per representative. After whitening the design is a level-scale regression:
//! per-segment constants inside the span of the whitened basis and global constants outside it.
//! [`LevelRegression`] exploits that structure; [`partial_f_test`] is the generic dense
//! path used to validate it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::BasisSystem;
use crate::linalg::{least_squares, thin_qr, triangular_rank};
use crate::pf::covariance::SigmaXi;
use crate::pf::whitening::{whiten, SpatialWhitener};
use crate::sequence::ChangePointSet;
use crate::special::f_upper_tail;

/// Exact-fit tolerance relative to the total sum of squares.
const EXACT_FIT: f64 = 1e-20;

/// Outcome of one partial F-test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub representative: usize,
    pub f_stat: f64,
    pub df1: usize,
    pub df2: i64,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub retained: bool,
    /// Set when the test could not be run because df2 <= 0.
    #[serde(default)]
    pub skipped: bool,
}

/// F statistic and sums of squares of a nested pair of fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialF {
    pub f_stat: f64,
    pub df1: usize,
    pub df2: i64,
    pub p_raw: f64,
    pub rss_full: f64,
    pub rss_reduced: f64,
    pub ssr_full: f64,
    pub ssr_reduced: f64,
    pub skipped: bool,
}

/// F ratio and p-value from nested residual sums of squares.
pub fn f_from_rss(rss_full: f64, rss_reduced: f64, tss: f64, df1: usize, df2: i64) -> PartialF {
    let base = PartialF {
        f_stat: 0.0,
        df1,
        df2,
        p_raw: 1.0,
        rss_full,
        rss_reduced,
        ssr_full: tss - rss_full,
        ssr_reduced: tss - rss_reduced,
        skipped: false,
    };
    if df2 <= 0 || df1 == 0 {
        return PartialF { skipped: true, ..base };
    }
    let tol = EXACT_FIT * tss.max(f64::MIN_POSITIVE);
    let gain = (rss_reduced - rss_full).max(0.0);
    if gain <= tol {
        return base;
    }
    let f_stat = if rss_full <= tol {
        f64::INFINITY
    } else {
        (gain / df1 as f64) / (rss_full / df2 as f64)
    };
    PartialF {
        f_stat,
        p_raw: f_upper_tail(f_stat, df1 as f64, df2 as f64),
        ..base
    }
}

/// Dense full-model design on the differenced scale with its per-representative column blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FullDesign {
    /// Td x p matrix, rows ordered time-major.
    pub matrix: DMatrix<f64>,
    /// `(representative, first column)` of each K-column block.
    pub blocks: Vec<(usize, usize)>,
    pub k: usize,
}

impl FullDesign {
    pub fn block_columns(&self, representative: usize) -> Option<Vec<usize>> {
        self.blocks
            .iter()
            .find(|(r, _)| *r == representative)
            .map(|&(_, c)| (c..c + self.k).collect())
    }
}

pub fn build_full_design(t_len: usize, basis: &BasisSystem, reps: &ChangePointSet) -> FullDesign {
    let (k, d) = (basis.k(), basis.d());
    let p = d + k * reps.len();
    let mut m = DMatrix::zeros(t_len * d, p);
    for j in 0..d {
        m[(j, j)] = 1.0;
    }
    let mut blocks = Vec::with_capacity(reps.len());
    for (i, tau) in reps.iter().enumerate() {
        let c0 = d + i * k;
        for kk in 0..k {
            for j in 0..d {
                m[((tau - 1) * d + j, c0 + kk)] = basis.basis_matrix()[(kk, j)];
            }
        }
        blocks.push((tau, c0));
    }
    FullDesign { matrix: m, blocks, k }
}

/// Dense partial F-test of the columns `tested` after whitening by `sigma_xi`.
pub fn partial_f_test(
    y: &DVector<f64>,
    full_design: &DMatrix<f64>,
    tested: &[usize],
    sigma_xi: &SigmaXi,
) -> Result<PartialF> {
    let (yw, xw) = whiten(y, full_design, sigma_xi)?;
    let keep: Vec<usize> = (0..full_design.ncols()).filter(|c| !tested.contains(c)).collect();
    let xr = xw.select_columns(&keep);
    let (_, rss_full) = least_squares(&xw, &yw)?;
    let (_, rss_reduced) = least_squares(&xr, &yw)?;
    let df2 = yw.len() as i64 - full_design.ncols() as i64;
    Ok(f_from_rss(rss_full, rss_reduced, yw.norm_squared(), tested.len(), df2))
}

/// Level-scale regression with segment constants inside the step span and global constants
/// in its orthogonal complement.
#[derive(Debug, Clone)]
pub struct LevelRegression {
    /// Coordinates of each level row in the orthonormal step basis (T x K).
    h: DMatrix<f64>,
    perp_ss: f64,
    tss: f64,
    r: usize,
    k: usize,
}

impl LevelRegression {
    /// `levels` is T x r and `steps` is r x K (step pattern per basis function).
    pub fn new(levels: &DMatrix<f64>, steps: &DMatrix<f64>) -> Result<Self> {
        let r = levels.ncols();
        let k = steps.ncols();
        if steps.nrows() != r {
            return Err(Error::InvalidArgument("level regression shapes differ".into()));
        }
        if k > r {
            return Err(Error::RankDeficientDesign);
        }
        let (u, rr) = thin_qr(steps);
        if triangular_rank(&rr, 1e-10) < k {
            return Err(Error::RankDeficientDesign);
        }
        let h = levels * &u;
        let mean = DVector::from_iterator(r, levels.column_iter().map(|c| c.mean()));
        let (mut perp_ss, mut tss) = (0.0, 0.0);
        for g in levels.row_iter() {
            let g = g.transpose();
            tss += g.norm_squared();
            let centered = &g - &mean;
            perp_ss += (&centered - &u * (u.transpose() * &centered)).norm_squared();
        }
        Ok(Self { h, perp_ss, tss, r, k })
    }

    pub fn tss(&self) -> f64 {
        self.tss
    }

    pub fn n_obs(&self) -> usize {
        self.h.nrows() * self.r
    }

    /// Residual sum of squares of the fit with steps at `reps`, and its parameter count.
    pub fn rss(&self, reps: &ChangePointSet) -> (f64, usize) {
        let t_len = self.h.nrows();
        let mut within = 0.0;
        for (start, end) in reps.segments(t_len) {
            let rows = self.h.rows(start - 1, end + 1 - start);
            let n = rows.nrows() as f64;
            for c in rows.column_iter() {
                let mean = c.sum() / n;
                within += c.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
        }
        ((within + self.perp_ss).max(0.0), self.r + self.k * reps.len())
    }
}

/// Builds the whitened level regression for a differenced sequence.
pub fn whitened_regression(
    differenced: &DMatrix<f64>,
    basis: &BasisSystem,
    whitener: &SpatialWhitener,
) -> Result<LevelRegression> {
    let levels = whitener.whiten_rows(differenced);
    let steps = whitener.matrix() * basis.basis_matrix().transpose();
    LevelRegression::new(&levels, &steps)
}

/// Tests every representative against the model holding all of them.
///
/// `p_adjusted` and `retained` are left at their defaults (`p_raw`, false).
pub fn test_representatives(regression: &LevelRegression, reps: &ChangePointSet) -> Vec<TestResult> {
    let (rss_full, p_full) = regression.rss(reps);
    let df2 = regression.n_obs() as i64 - p_full as i64;
    let k = regression.k;
    reps.indices()
        .par_iter()
        .map(|&tau| {
            let (rss_red, _) = regression.rss(&reps.without(tau));
            let pf = f_from_rss(rss_full, rss_red, regression.tss(), k, df2);
            if pf.skipped {
                log::warn!("partial F-test for {tau} skipped: df2 = {df2}");
            }
            TestResult {
                representative: tau,
                f_stat: pf.f_stat,
                df1: k,
                df2,
                p_raw: pf.p_raw,
                p_adjusted: pf.p_raw,
                retained: false,
                skipped: pf.skipped,
            }
        })
        .collect()
}
