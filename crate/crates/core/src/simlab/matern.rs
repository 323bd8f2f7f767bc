use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::sequence::Grid;
use crate::special::bessel_k;

/// Matérn covariance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    /// Scale; the variance parameter is `sigma^2`.
    pub sigma: f64,
    /// Range.
    pub r: f64,
    /// Smoothness.
    pub nu: f64,
}

impl Default for MaternParams {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            r: 0.1,
            nu: 1.0,
        }
    }
}

impl MaternParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.sigma) && ok(self.r) && ok(self.nu) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("Matérn parameters must be positive: {self:?}")))
        }
    }

    /// Leading constant `sigma^2 sqrt(pi) r^{2 nu} / (2^{nu-1} Gamma(nu + 1/2))`.
    fn prefactor(&self) -> f64 {
        let ln = 2.0 * self.sigma.ln() + 0.5 * std::f64::consts::PI.ln() + 2.0 * self.nu * self.r.ln()
            - (self.nu - 1.0) * std::f64::consts::LN_2
            - ln_gamma(self.nu + 0.5);
        ln.exp()
    }

    /// Covariance at zero distance, `sigma^2 sqrt(pi) r^{2 nu} Gamma(nu) / Gamma(nu + 1/2)`.
    pub fn variance(&self) -> f64 {
        let ln = 2.0 * self.sigma.ln() + 0.5 * std::f64::consts::PI.ln() + 2.0 * self.nu * self.r.ln()
            + ln_gamma(self.nu)
            - ln_gamma(self.nu + 0.5);
        ln.exp()
    }

    /// Covariance at distance `h >= 0`.
    pub fn covariance(&self, h: f64) -> Result<f64> {
        if h == 0.0 {
            return Ok(self.variance());
        }
        let u = h.abs() / self.r;
        let k = bessel_k(self.nu, u)?;
        let v = self.prefactor() * u.powf(self.nu) * k;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::BesselOverflow { nu: self.nu, x: u })
        }
    }
}

/// Matérn covariance matrix on the grid.
pub fn matern_cov(grid: &Grid, params: &MaternParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let x = grid.points();
    let d = x.len();
    let mut c = DMatrix::zeros(d, d);
    for i in 0..d {
        c[(i, i)] = params.variance();
        for j in 0..i {
            let v = params.covariance(x[i] - x[j])?;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}
