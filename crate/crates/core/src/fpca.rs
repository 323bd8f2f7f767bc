//! Functional principal component basis on a discretized grid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::sequence::Grid;

/// K basis functions evaluated on the grid together with their second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem {
    basis_matrix: DMatrix<f64>,
    second_deriv_matrix: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    fve: f64,
    quad_weights: Vec<f64>,
}

impl BasisSystem {
    /// Assembles a basis from explicit parts.
    ///
    /// Orthonormality is not enforced here; [`BasisSystem::orthonormality_error`]
    /// reports how far the rows are from it.
    pub fn from_parts(
        basis_matrix: DMatrix<f64>,
        second_deriv_matrix: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        fve: f64,
        quad_weights: Vec<f64>,
    ) -> Result<Self> {
        let (k, d) = basis_matrix.shape();
        if k == 0 || d == 0 {
            return Err(Error::InvalidArgument("basis must be nonempty".into()));
        }
        if second_deriv_matrix.shape() != (k, d) || eigenvalues.len() != k || quad_weights.len() != d {
            return Err(Error::InvalidArgument("basis parts have inconsistent shapes".into()));
        }
        if quad_weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
        }
        Ok(Self {
            basis_matrix,
            second_deriv_matrix,
            eigenvalues,
            fve,
            quad_weights,
        })
    }

    /// Basis with zero second derivatives and unit weights; handy for small hand-made problems.
    pub fn flat(basis_matrix: DMatrix<f64>) -> Result<Self> {
        let (k, d) = basis_matrix.shape();
        Self::from_parts(basis_matrix, DMatrix::zeros(k, d), vec![1.0; k], 1.0, vec![1.0; d])
    }

    /// K x d matrix; row k is basis function k on the grid.
    pub fn basis_matrix(&self) -> &DMatrix<f64> {
        &self.basis_matrix
    }

    pub fn second_deriv_matrix(&self) -> &DMatrix<f64> {
        &self.second_deriv_matrix
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn fve(&self) -> f64 {
        self.fve
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// Number of basis functions K.
    pub fn k(&self) -> usize {
        self.basis_matrix.nrows()
    }

    /// Number of grid points d.
    pub fn d(&self) -> usize {
        self.basis_matrix.ncols()
    }

    /// Quadrature Gram matrix of the rows of `m`.
    pub fn weighted_gram(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let w = DVector::from_column_slice(&self.quad_weights);
        let scaled = DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * w[c]);
        &scaled * m.transpose()
    }

    /// Max-entry deviation of the quadrature Gram of the basis from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.weighted_gram(&self.basis_matrix);
        let k = self.k();
        (g - DMatrix::<f64>::identity(k, k)).amax()
    }
}

/// Columnwise mean of the rows.
pub fn estimate_mean(values: &DMatrix<f64>) -> DVector<f64> {
    let t = values.nrows().max(1) as f64;
    DVector::from_iterator(values.ncols(), values.column_iter().map(|c| c.sum() / t))
}

/// Sample covariance of the rows with divisor T - 1.
pub fn estimate_covariance(values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = values.nrows();
    if t < 2 {
        return Err(Error::DegenerateSample { needed: 2, found: t });
    }
    let mean = estimate_mean(values);
    let centered = DMatrix::from_fn(t, values.ncols(), |r, c| values[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / (t as f64 - 1.0);
    Ok(crate::linalg::symmetrize(&cov))
}

/// Covariance with the white-noise nugget removed.
///
/// Each diagonal entry is replaced by the mean of its neighboring off-diagonal entries and the
/// result is projected onto the PSD cone by clipping negative eigenvalues. Noise that is
/// independent across grid points only inflates the diagonal, so this keeps it from
/// dominating the explained-variance count.
pub fn remove_nugget(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    if d < 2 {
        return cov.clone();
    }
    let mut c = cov.clone();
    for j in 0..d {
        c[(j, j)] = match j {
            0 => cov[(0, 1)],
            _ if j == d - 1 => cov[(d - 1, d - 2)],
            _ => 0.5 * (cov[(j, j - 1)] + cov[(j, j + 1)]),
        };
    }
    let (vals, vecs) = sym_eigen_desc(&c);
    let clipped = DMatrix::from_diagonal(&DVector::from_iterator(d, vals.iter().map(|v| v.max(0.0))));
    crate::linalg::symmetrize(&(&vecs * clipped * vecs.transpose()))
}

/// FPCA basis for a grid covariance, keeping the fewest components reaching `fve_threshold`.
///
/// The eigenproblem is solved for `W^{1/2} C W^{1/2}` with trapezoidal weights W so the
/// returned functions are orthonormal in the quadrature inner product.
pub fn fpca_basis(cov: &DMatrix<f64>, grid: &Grid, fve_threshold: f64) -> Result<BasisSystem> {
    let d = grid.len();
    if cov.shape() != (d, d) {
        return Err(Error::GridMismatch {
            grid: d,
            columns: cov.ncols(),
        });
    }
    if !(fve_threshold > 0.0 && fve_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fve threshold {fve_threshold} outside (0, 1]"
        )));
    }
    let w = grid.quadrature_weights();
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let m = DMatrix::from_fn(d, d, |r, c| sqrt_w[r] * cov[(r, c)] * sqrt_w[c]);
    let (vals, vecs) = sym_eigen_desc(&m);
    let trace: f64 = m.diagonal().sum();
    let min = vals.last().copied().unwrap_or(0.0);
    if min < -1e-8 * trace.abs() {
        return Err(Error::NotPsd(min));
    }
    let vals: Vec<f64> = vals.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = vals.iter().sum();

    if total <= 0.0 {
        let c = 1.0 / w.iter().sum::<f64>().sqrt();
        let basis = DMatrix::from_element(1, d, c);
        let second = second_derivatives(&basis, grid)?;
        return BasisSystem::from_parts(basis, second, vec![0.0], 1.0, w);
    }

    let mut cum = 0.0;
    let mut k = d;
    for (i, v) in vals.iter().enumerate() {
        cum += v;
        if cum >= fve_threshold * total * (1.0 - 1e-12) {
            k = i + 1;
            break;
        }
    }
    let mut basis = DMatrix::zeros(k, d);
    for i in 0..k {
        let mut row: Vec<f64> = (0..d).map(|j| vecs[(j, i)] / sqrt_w[j]).collect();
        let pivot = row
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, v)| v)
            .unwrap_or(1.0);
        if pivot < 0.0 {
            row.iter_mut().for_each(|x| *x = -*x);
        }
        for (j, x) in row.into_iter().enumerate() {
            basis[(i, j)] = x;
        }
    }
    let fve = vals[..k].iter().sum::<f64>() / total;
    let second = second_derivatives(&basis, grid)?;
    BasisSystem::from_parts(basis, second, vals[..k].to_vec(), fve, w)
}

/// Row-wise second derivatives by three-point differences on a possibly uneven grid.
///
/// Endpoints copy the nearest interior value.
pub fn second_derivatives(basis_matrix: &DMatrix<f64>, grid: &Grid) -> Result<DMatrix<f64>> {
    let x = grid.points();
    let d = x.len();
    if d < 3 {
        return Err(Error::GridTooSmall(d));
    }
    if basis_matrix.ncols() != d {
        return Err(Error::GridMismatch {
            grid: d,
            columns: basis_matrix.ncols(),
        });
    }
    let mut out = DMatrix::zeros(basis_matrix.nrows(), d);
    for k in 0..basis_matrix.nrows() {
        for j in 1..d - 1 {
            let h0 = x[j] - x[j - 1];
            let h1 = x[j + 1] - x[j];
            let f0 = basis_matrix[(k, j - 1)];
            let f1 = basis_matrix[(k, j)];
            let f2 = basis_matrix[(k, j + 1)];
            out[(k, j)] = 2.0 * (h0 * f2 - (h0 + h1) * f1 + h1 * f0) / (h0 * h1 * (h0 + h1));
        }
        out[(k, 0)] = out[(k, 1)];
        out[(k, d - 1)] = out[(k, d - 2)];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn rows(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn nugget_removal_drops_white_noise() {
        // Rank-one smooth part plus a diagonal nugget.
        let d = 8;
        let g: Vec<f64> = (0..d).map(|j| 1.0 + j as f64 / d as f64).collect();
        let smooth = DMatrix::from_fn(d, d, |i, j| g[i] * g[j]);
        let cleaned = remove_nugget(&(&smooth + DMatrix::identity(d, d) * 5.0));
        let (vals, _) = sym_eigen_desc(&cleaned);
        assert!(vals.iter().all(|&v| v >= -1e-12 * vals[0]));
        assert!(vals[1] < 0.05 * vals[0], "{vals:?}");
        assert!((cleaned.trace() - smooth.trace()).abs() < 0.1 * smooth.trace());
        let grid = Grid::equispaced(d).unwrap();
        assert_eq!(fpca_basis(&cleaned, &grid, 0.99).unwrap().k(), 1);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(estimate_mean(&rows(2, 2, &[0.0, 0.0, 2.0, 2.0])).as_slice(), &[1.0, 1.0]);
        assert_eq!(estimate_mean(&rows(1, 2, &[5.0, 7.0])).as_slice(), &[5.0, 7.0]);
        assert_eq!(
            estimate_mean(&rows(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).as_slice(),
            &[3.0, 4.0]
        );
    }

    #[test]
    fn covariance_examples() {
        let c = estimate_covariance(&DMatrix::from_element(4, 3, 2.5)).unwrap();
        assert!(c.iter().all(|&x| x == 0.0));
        let c = estimate_covariance(&rows(2, 1, &[0.0, 2.0])).unwrap();
        assert_eq!(c[(0, 0)], 2.0);
        let c = estimate_covariance(&rows(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(c, rows(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        assert_eq!(
            estimate_covariance(&rows(1, 2, &[1.0, 2.0])),
            Err(Error::DegenerateSample { needed: 2, found: 1 })
        );
    }

    #[test]
    fn identity_covariance_needs_every_component() {
        let grid = Grid::equispaced(10).unwrap();
        let b = fpca_basis(&DMatrix::identity(10, 10), &grid, 0.99).unwrap();
        assert_eq!(b.k(), 10);
        assert!(b.orthonormality_error() < 1e-8);
    }

    #[test]
    fn rank_one_covariance() {
        let grid = Grid::equispaced(8).unwrap();
        let v = DVector::from_fn(8, |j, _| (j as f64 * 0.7).sin() + 0.3);
        let b = fpca_basis(&(&v * v.transpose()), &grid, 0.99).unwrap();
        assert_eq!(b.k(), 1);
        assert!(b.orthonormality_error() < 1e-8);
        assert!((b.fve() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_covariance_falls_back_to_constant() {
        let grid = Grid::new(vec![0.0, 0.3, 0.5, 1.0]).unwrap();
        let b = fpca_basis(&DMatrix::zeros(4, 4), &grid, 0.99).unwrap();
        assert_eq!(b.k(), 1);
        assert!(b.orthonormality_error() < 1e-12);
        let c = b.basis_matrix()[(0, 0)];
        assert!(b.basis_matrix().iter().all(|&x| x == c && x > 0.0));
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let grid = Grid::equispaced(3).unwrap();
        let c = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, -0.5]));
        assert!(matches!(fpca_basis(&c, &grid, 0.9), Err(Error::NotPsd(_))));
    }

    #[test]
    fn sign_convention_largest_entry_positive() {
        let grid = Grid::equispaced(6).unwrap();
        let v = DVector::from_vec(vec![0.1, -0.2, -3.0, 0.4, 0.2, 0.1]);
        let b = fpca_basis(&(&v * v.transpose()), &grid, 0.99).unwrap();
        let row = b.basis_matrix().row(0);
        let (imax, _) = row.iter().enumerate().fold((0, 0.0), |acc, (i, &x)| {
            if x.abs() > acc.1 {
                (i, x.abs())
            } else {
                acc
            }
        });
        assert_eq!(imax, 2);
        assert!(row[2] > 0.0);
    }

    #[test]
    fn second_derivative_examples() {
        let grid = Grid::equispaced(21).unwrap();
        let x = grid.points();
        let lin = DMatrix::from_fn(1, 21, |_, j| 3.0 * x[j] - 1.0);
        assert!(second_derivatives(&lin, &grid).unwrap().amax() < 1e-8);

        let quad = DMatrix::from_fn(1, 21, |_, j| x[j] * x[j]);
        let s = second_derivatives(&quad, &grid).unwrap();
        assert!(s.iter().all(|v| (v - 2.0).abs() < 1e-6));

        let grid = Grid::equispaced(101).unwrap();
        let x = grid.points();
        let sin = DMatrix::from_fn(1, 101, |_, j| (2.0 * PI * x[j]).sin());
        let s = second_derivatives(&sin, &grid).unwrap();
        let exact: Vec<f64> = x.iter().map(|&t| -4.0 * PI * PI * (2.0 * PI * t).sin()).collect();
        let scale = exact.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for j in 1..100 {
            assert!((s[(0, j)] - exact[j]).abs() < 1e-2 * scale);
        }
    }

    #[test]
    fn second_derivative_exact_for_quadratics_on_uneven_grid() {
        let grid = Grid::new(vec![0.0, 0.05, 0.3, 0.32, 0.7, 1.0]).unwrap();
        let x = grid.points();
        let q = DMatrix::from_fn(1, 6, |_, j| 1.5 * x[j] * x[j] - x[j] + 2.0);
        let s = second_derivatives(&q, &grid).unwrap();
        assert!(s.iter().all(|v| (v - 3.0).abs() < 1e-9));
        assert_eq!(
            second_derivatives(&DMatrix::zeros(1, 2), &Grid::equispaced(3).unwrap()),
            Err(Error::GridMismatch { grid: 3, columns: 2 })
        );
    }

    fn random_cov(d: usize, rank: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed | 1;
        let a = DMatrix::from_fn(d, rank, |_, _| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        &a * a.transpose()
    }

    proptest! {
        #[test]
        fn fve_monotone_in_threshold(seed in any::<u64>(), d in 3usize..15, lo in 0.05f64..1.0, hi in 0.05f64..1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let grid = Grid::equispaced(d).unwrap();
            let cov = random_cov(d, d, seed);
            let a = fpca_basis(&cov, &grid, lo).unwrap();
            let b = fpca_basis(&cov, &grid, hi).unwrap();
            prop_assert!(a.k() <= b.k());
            prop_assert!(a.fve() >= lo * (1.0 - 1e-9));
            prop_assert!(b.orthonormality_error() < 1e-8);
            prop_assert!(b.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
