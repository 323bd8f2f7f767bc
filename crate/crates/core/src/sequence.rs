//! Domain types shared by every stage: grids, curve sequences, change-point sets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered evaluation points in [0, 1] shared by every curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::GridTooSmall(points.len()));
        }
        for (j, &x) in points.iter().enumerate() {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidGrid(format!("point {j} = {x} is outside [0, 1]")));
            }
            if j > 0 && x <= points[j - 1] {
                return Err(Error::InvalidGrid(format!(
                    "points must be strictly increasing (position {j})"
                )));
            }
        }
        Ok(Self { points })
    }

    /// Interior points j/(d+1), j = 1..d.
    pub fn equispaced(d: usize) -> Result<Self> {
        let step = 1.0 / (d as f64 + 1.0);
        Self::new((1..=d).map(|j| j as f64 * step).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoidal quadrature weights on the grid.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        trapezoid_weights(&self.points)
    }
}

/// Trapezoidal weights for arbitrary increasing abscissae; a single point gets weight 1.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let d = x.len();
    if d == 1 {
        return vec![1.0];
    }
    let mut w = vec![0.0; d];
    for j in 0..d - 1 {
        let h = 0.5 * (x[j + 1] - x[j]);
        w[j] += h;
        w[j + 1] += h;
    }
    w
}

/// T curves observed on a shared grid; row t is curve t.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSequence {
    values: DMatrix<f64>,
    grid: Grid,
}

impl FunctionalSequence {
    pub fn new(values: DMatrix<f64>, grid: Grid) -> Result<Self> {
        if values.ncols() != grid.len() {
            return Err(Error::GridMismatch {
                grid: grid.len(),
                columns: values.ncols(),
            });
        }
        if values.nrows() < 2 {
            return Err(Error::DegenerateSample {
                needed: 2,
                found: values.nrows(),
            });
        }
        check_finite(&values)?;
        Ok(Self { values, grid })
    }

    /// Builds a sequence on the default equispaced grid.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let grid = Grid::equispaced(values.ncols())?;
        Self::new(values, grid)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of curves T.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Number of grid points d.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

fn check_finite(values: &DMatrix<f64>) -> Result<()> {
    for row in 0..values.nrows() {
        for col in 0..values.ncols() {
            if !values[(row, col)].is_finite() {
                return Err(Error::NonFiniteEntry { row, col });
            }
        }
    }
    Ok(())
}

/// Row 1 holds f_1, row t holds f_t - f_{t-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferencedSequence {
    values: DMatrix<f64>,
    grid: Grid,
}

impl DifferencedSequence {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Rebuilds the level sequence by cumulative row sums.
    pub fn cumulative(&self) -> Result<FunctionalSequence> {
        FunctionalSequence::new(cumulative_rows(&self.values), self.grid.clone())
    }
}

pub fn difference(seq: &FunctionalSequence) -> DifferencedSequence {
    DifferencedSequence {
        values: difference_rows(seq.values()),
        grid: seq.grid().clone(),
    }
}

/// First differences along rows, keeping the first row.
pub fn difference_rows(values: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = values.clone();
    for t in (1..values.nrows()).rev() {
        for j in 0..values.ncols() {
            out[(t, j)] = values[(t, j)] - values[(t - 1, j)];
        }
    }
    out
}

/// Cumulative sums along rows; the inverse of [`difference_rows`].
pub fn cumulative_rows(values: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = values.clone();
    for t in 1..values.nrows() {
        for j in 0..values.ncols() {
            out[(t, j)] += out[(t - 1, j)];
        }
    }
    out
}

/// Checks a row-major matrix read from text input and wraps it as a sequence.
pub fn validate_csv_matrix(raw: &[Vec<f64>], grid: Option<Vec<f64>>) -> Result<FunctionalSequence> {
    let d = raw.first().map(Vec::len).unwrap_or(0);
    for (row, r) in raw.iter().enumerate() {
        if r.len() != d {
            return Err(Error::RaggedRows {
                row,
                expected: d,
                found: r.len(),
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry { row, col });
        }
    }
    let grid = match grid {
        Some(points) => {
            if points.len() != d {
                return Err(Error::GridMismatch {
                    grid: points.len(),
                    columns: d,
                });
            }
            Grid::new(points)?
        }
        None => Grid::equispaced(d)?,
    };
    let values = DMatrix::from_fn(raw.len(), d, |t, j| raw[t][j]);
    FunctionalSequence::new(values, grid)
}

/// Sorted, duplicate-free change-point indices, each at least 2.
///
/// Indices are 1-based time points; index 1 is the initial level and never a change.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ChangePointSet {
    indices: Vec<usize>,
}

impl ChangePointSet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&first) = indices.first() {
            if first < 2 {
                return Err(Error::IndexOutOfRange {
                    index: first,
                    len: indices.last().copied().unwrap_or(first),
                });
            }
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Like [`ChangePointSet::new`] but also requires every index to be at most `t_len`.
    pub fn bounded(indices: Vec<usize>, t_len: usize) -> Result<Self> {
        let set = Self::new(indices)?;
        if let Some(&last) = set.indices.last() {
            if last > t_len {
                return Err(Error::IndexOutOfRange {
                    index: last,
                    len: t_len,
                });
            }
        }
        Ok(set)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    /// Set without `index`.
    pub fn without(&self, index: usize) -> Self {
        Self {
            indices: self.indices.iter().copied().filter(|&i| i != index).collect(),
        }
    }

    /// Inclusive 1-based segments `(start, end)` induced on 1..=t_len.
    pub fn segments(&self, t_len: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.indices.len() + 1);
        let mut start = 1;
        for &tau in &self.indices {
            if tau > start && tau <= t_len {
                out.push((start, tau - 1));
                start = tau;
            }
        }
        out.push((start, t_len));
        out
    }
}

impl TryFrom<Vec<usize>> for ChangePointSet {
    type Error = Error;

    fn try_from(value: Vec<usize>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ChangePointSet> for Vec<usize> {
    fn from(value: ChangePointSet) -> Self {
        value.indices
    }
}

/// How `lambda_grid` values are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaScale {
    /// Multiplied by the median group least-squares norm of the differenced data.
    Relative,
    /// Used as given.
    Absolute,
}

/// Hyperparameters of the two-stage detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Candidate MCP levels.
    pub lambda_grid: Vec<f64>,
    pub lambda_scale: LambdaScale,
    /// Candidate smoothness penalties.
    pub eta_grid: Vec<f64>,
    /// Candidate link parameters for merging nearby candidates.
    pub kappa_grid: Vec<usize>,
    /// MCP concavity.
    pub gamma: f64,
    /// Target false discovery rate.
    pub fdr_alpha: f64,
    /// Fraction of variance the basis must explain.
    pub fve_threshold: f64,
}

/// Log-spaced points in the default relative lambda grid over `[1e-2, 1e1]`.
pub const DEFAULT_LAMBDA_POINTS: usize = 31;

impl Default for DetectorConfig {
    fn default() -> Self {
        let lambda_grid = (0..DEFAULT_LAMBDA_POINTS)
            .map(|i| 10f64.powf(-2.0 + 3.0 * i as f64 / (DEFAULT_LAMBDA_POINTS - 1) as f64))
            .collect();
        Self {
            lambda_grid,
            lambda_scale: LambdaScale::Relative,
            eta_grid: vec![0.0, 1e-4, 1e-2, 1.0],
            kappa_grid: vec![1, 2, 5, 10],
            gamma: 3.0,
            fdr_alpha: 0.01,
            fve_threshold: 0.99,
        }
    }
}

impl DetectorConfig {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.fdr_alpha = alpha;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_fve_threshold(mut self, fve: f64) -> Self {
        self.fve_threshold = fve;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.lambda_grid.is_empty() || self.eta_grid.is_empty() || self.kappa_grid.is_empty() {
            return bad("grids must be nonempty");
        }
        if self.lambda_grid.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return bad("lambda values must be positive");
        }
        if self.eta_grid.iter().any(|&e| !(e.is_finite() && e >= 0.0)) {
            return bad("eta values must be nonnegative");
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return bad("gamma must exceed 1");
        }
        if !(self.fdr_alpha > 0.0 && self.fdr_alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.fve_threshold > 0.0 && self.fve_threshold <= 1.0) {
            return bad("fve threshold must lie in (0, 1]");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equispaced_grid_default() {
        let seq = validate_csv_matrix(&vec![vec![1.0; 4]; 3], None).unwrap();
        let expected = [0.2, 0.4, 0.6, 0.8];
        for (a, b) in seq.grid().points().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn csv_errors() {
        let mut raw = vec![vec![1.0; 4]; 3];
        raw[1][2] = f64::NAN;
        assert_eq!(
            validate_csv_matrix(&raw, None),
            Err(Error::NonFiniteEntry { row: 1, col: 2 })
        );
        let raw = vec![vec![1.0; 4]; 3];
        assert_eq!(
            validate_csv_matrix(&raw, Some(vec![0.1, 0.5, 0.9])),
            Err(Error::GridMismatch { grid: 3, columns: 4 })
        );
        let raw = vec![vec![1.0; 4], vec![1.0; 3]];
        assert!(matches!(validate_csv_matrix(&raw, None), Err(Error::RaggedRows { row: 1, .. })));
    }

    #[test]
    fn grid_rejects_bad_points() {
        assert!(Grid::new(vec![0.1, 0.1, 0.2]).is_err());
        assert!(Grid::new(vec![0.1, 0.5, 1.5]).is_err());
        assert_eq!(Grid::new(vec![0.1, 0.2]), Err(Error::GridTooSmall(2)));
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = Grid::new(vec![0.0, 0.1, 0.35, 0.7, 1.0]).unwrap();
        let w = g.quadrature_weights();
        let integral: f64 = g.points().iter().zip(&w).map(|(x, w)| x * w).sum();
        assert!((integral - 0.5).abs() < 1e-15);
    }

    #[test]
    fn difference_examples() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 3.0, 3.0, 3.0, 3.0]);
        let d = difference_rows(&v);
        assert_eq!(d, DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]));

        let c = DMatrix::from_element(5, 3, 4.5);
        let d = difference_rows(&c);
        assert!(d.row(0).iter().all(|&x| x == 4.5));
        assert!(d.rows(1, 4).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn change_point_set_rules() {
        let s = ChangePointSet::new(vec![9, 5, 5, 2]).unwrap();
        assert_eq!(s.indices(), &[2, 5, 9]);
        assert!(ChangePointSet::new(vec![1, 4]).is_err());
        assert!(ChangePointSet::bounded(vec![4, 11], 10).is_err());
        assert_eq!(s.segments(12), vec![(1, 1), (2, 4), (5, 8), (9, 12)]);
        assert_eq!(ChangePointSet::empty().segments(7), vec![(1, 7)]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "[2,5,9]");
        assert!(serde_json::from_str::<ChangePointSet>("[1]").is_err());
    }

    #[test]
    fn default_config_is_valid() {
        let c = DetectorConfig::default();
        c.validate().unwrap();
        assert_eq!(c.lambda_grid.len(), DEFAULT_LAMBDA_POINTS);
        assert!((c.lambda_grid[0] - 0.01).abs() < 1e-15);
        assert!((c.lambda_grid[DEFAULT_LAMBDA_POINTS - 1] - 10.0).abs() < 1e-12);
        assert!(c.clone().with_gamma(1.0).validate().is_err());
        assert!(c.with_alpha(1.0).validate().is_err());
    }

    proptest! {
        #[test]
        fn difference_cumsum_roundtrip(t in 1usize..12, d in 1usize..6, seed in any::<u64>()) {
            let mut state = seed;
            let m = DMatrix::from_fn(t, d, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 200.0
            });
            let back = cumulative_rows(&difference_rows(&m));
            for (a, b) in back.iter().zip(m.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn change_point_sets_never_hold_one(v in proptest::collection::vec(0usize..50, 0..10)) {
            match ChangePointSet::new(v.clone()) {
                Ok(s) => {
                    prop_assert!(!s.contains(1) && !s.contains(0));
                    prop_assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
                }
                Err(_) => prop_assert!(v.iter().any(|&i| i < 2)),
            }
        }
    }
}
