//! Whitening against the covariance of differenced noise.
//!
//! With `Sigma = L L^T`, the stacked covariance factors as `(D L)(D L)^T` where `D` is the
//! first-difference matrix, so whitening is a running sum of `L^{-1} y_t`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, invert_lower, sym_eigen_desc};
use crate::pf::covariance::SigmaXi;

const TRUNCATION: f64 = 1e-10;

/// Spatial whitening map `W` (r x d) with `W Sigma W^T = I_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWhitener {
    w: DMatrix<f64>,
    generalized: bool,
}

impl SpatialWhitener {
    /// Inverse Cholesky factor when `sigma` is positive definite, otherwise the truncated
    /// eigen pseudo-inverse square root.
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if let Some(l) = cholesky_lower(sigma) {
            let diag = l.diagonal();
            let ratio = diag.min() / diag.max();
            if ratio * ratio <= TRUNCATION {
                return Self::generalized(sigma);
            }
            if let Some(w) = invert_lower(&l) {
                if w.iter().all(|x| x.is_finite()) {
                    return Ok(Self { w, generalized: false });
                }
            }
        }
        Self::generalized(sigma)
    }

    fn generalized(sigma: &DMatrix<f64>) -> Result<Self> {
        Self::spectral(sigma, TRUNCATION)
    }

    /// Eigen pseudo-inverse square root keeping eigenvalues above `rel_tol * max`.
    pub fn spectral(sigma: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        let (vals, vecs) = sym_eigen_desc(sigma);
        let max = vals.first().copied().unwrap_or(0.0);
        if !(max > 0.0) {
            return Err(Error::SingularCovariance);
        }
        let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > rel_tol * max).collect();
        let d = sigma.nrows();
        let w = DMatrix::from_fn(keep.len(), d, |r, c| vecs[(c, keep[r])] / vals[keep[r]].sqrt());
        Ok(Self { w, generalized: true })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Whitened dimension per time point.
    pub fn rank(&self) -> usize {
        self.w.nrows()
    }

    pub fn is_generalized(&self) -> bool {
        self.generalized
    }

    /// Whitens a T x d matrix of differenced rows into T x r whitened levels.
    pub fn whiten_rows(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = y * self.w.transpose();
        for t in 1..out.nrows() {
            for j in 0..out.ncols() {
                out[(t, j)] += out[(t - 1, j)];
            }
        }
        out
    }

    /// Whitens a stacked (time-major) vector of length T d into length T r.
    pub fn whiten_stacked(&self, v: &DVector<f64>) -> DVector<f64> {
        let d = self.w.ncols();
        let t_len = v.len() / d;
        let y = DMatrix::from_fn(t_len, d, |t, j| v[t * d + j]);
        let g = self.whiten_rows(&y);
        let r = self.rank();
        DVector::from_fn(t_len * r, |i, _| g[(i / r, i % r)])
    }
}

/// Whitens a response and design against `sigma_xi`.
pub fn whiten(y: &DVector<f64>, design: &DMatrix<f64>, sigma_xi: &SigmaXi) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if y.len() != sigma_xi.dim() || design.nrows() != sigma_xi.dim() {
        return Err(Error::InvalidArgument("response, design and covariance sizes differ".into()));
    }
    let wh = SpatialWhitener::new(sigma_xi.sigma())?;
    let yw = wh.whiten_stacked(y);
    let mut dw = DMatrix::zeros(yw.len(), design.ncols());
    for c in 0..design.ncols() {
        dw.set_column(c, &wh.whiten_stacked(&design.column(c).into_owned()));
    }
    Ok((yw, dw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pf::covariance::build_sigma_xi_blocks;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identity_sigma_whitens_by_cumulation() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let sx = build_sigma_xi_blocks(&DMatrix::identity(2, 2), 3);
        let design = DMatrix::from_fn(6, 2, |r, c| (r + c) as f64);
        let (yw, dw) = whiten(&y, &design, &sx).unwrap();
        // The stacked covariance of differenced noise is not the identity, so the
        // whitened vector is the cumulated one.
        assert_eq!(yw.as_slice(), &[1.0, 2.0, 4.0, 6.0, 9.0, 12.0]);
        assert_eq!(dw.nrows(), 6);
    }

    #[test]
    fn whitening_inverts_the_stacked_covariance() {
        let sigma = DMatrix::from_row_slice(2, 2, &[0.25, 0.1, 0.1, 0.2]);
        let sx = build_sigma_xi_blocks(&sigma, 4);
        let wh = SpatialWhitener::new(&sigma).unwrap();
        let dense = sx.to_dense().unwrap();
        let n = dense.nrows();
        let mut a = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut e = DVector::zeros(n);
            e[c] = 1.0;
            a.set_column(c, &wh.whiten_stacked(&e));
        }
        let cov = &a * dense * a.transpose();
        assert!((cov - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
    }

    #[test]
    fn scalar_monte_carlo_whitened_covariance() {
        let sigma = DMatrix::from_element(1, 1, 1.0);
        let wh = SpatialWhitener::new(&sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 5000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..reps {
            let e1: f64 = StandardNormal.sample(&mut rng);
            let e2: f64 = StandardNormal.sample(&mut rng);
            let xi = DVector::from_vec(vec![e1, e2 - e1]);
            let w = wh.whiten_stacked(&xi);
            acc += &w * w.transpose();
        }
        acc /= reps as f64;
        assert!((acc - DMatrix::<f64>::identity(2, 2)).amax() < 0.1);
    }

    #[test]
    fn singular_covariance_uses_generalized_inverse() {
        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let sigma = &v * v.transpose();
        let wh = SpatialWhitener::new(&sigma).unwrap();
        assert!(wh.is_generalized());
        assert_eq!(wh.rank(), 1);
        let id = wh.matrix() * &sigma * wh.matrix().transpose();
        assert!((id[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(SpatialWhitener::new(&DMatrix::zeros(3, 3)), Err(Error::SingularCovariance));
    }
}
