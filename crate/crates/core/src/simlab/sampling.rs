use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;

/// Draws `mean + L z` with `L L^T = cov + jitter I`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: Option<DMatrix<f64>>,
}

impl GaussianSampler {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(Error::InvalidArgument("mean and covariance sizes differ".into()));
        }
        if cov.iter().all(|&x| x == 0.0) {
            return Ok(Self { mean, factor: None });
        }
        let base = (cov.trace() / d as f64).abs().max(f64::MIN_POSITIVE);
        let mut jitter = 1e-10 * base;
        for _ in 0..8 {
            if let Some(l) = cholesky_lower(&(cov + DMatrix::identity(d, d) * jitter)) {
                return Ok(Self { mean, factor: Some(l) });
            }
            jitter *= 10.0;
        }
        Err(Error::NotPsd(f64::NAN))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Correlated zero-mean part `L z` from fresh standard normals.
    pub fn draw_centered<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        match &self.factor {
            Some(l) => l * z,
            None => DVector::zeros(self.dim()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.mean + self.draw_centered(rng)
    }

    /// Multivariate t draw: the Gaussian part first, then the chi-square mixing variable.
    pub fn draw_t<R: Rng + ?Sized>(&self, df: f64, rng: &mut R) -> Result<DVector<f64>> {
        let centered = self.draw_centered(rng);
        let chi = ChiSquared::new(df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let w: f64 = chi.sample(rng);
        Ok(&self.mean + centered * (df / w).sqrt())
    }
}

/// One Gaussian draw from a fresh generator seeded with `seed`.
pub fn sample_gp(mean: &DVector<f64>, cov: &DMatrix<f64>, seed: u64) -> Result<DVector<f64>> {
    let sampler = GaussianSampler::new(mean.clone(), cov)?;
    Ok(sampler.draw(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// One multivariate t draw from a fresh generator seeded with `seed`.
pub fn sample_tp(mean: &DVector<f64>, cov: &DMatrix<f64>, df: u32, seed: u64) -> Result<DVector<f64>> {
    if df < 1 {
        return Err(Error::InvalidArgument("degrees of freedom must be at least 1".into()));
    }
    let sampler = GaussianSampler::new(mean.clone(), cov)?;
    sampler.draw_t(df as f64, &mut ChaCha8Rng::seed_from_u64(seed))
}
