//! Stage two: whitening, partial F-tests and FDR control.

pub mod bh;
pub mod covariance;
pub mod ftest;
pub mod whitening;

pub use bh::{apply_bh, bh_adjust, pf_filter};
pub use covariance::{build_sigma_xi_blocks, estimate_noise_covariance, estimate_pilot_covariance, NoiseCovariance, SigmaXi};
pub use ftest::{whitened_regression, build_full_design, partial_f_test, FullDesign, LevelRegression, PartialF, TestResult};
pub use whitening::{whiten, SpatialWhitener};

use crate::error::Result;
use crate::fpca::BasisSystem;
use crate::sequence::{difference_rows, ChangePointSet, FunctionalSequence};

/// Result of testing a set of representatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PfOutcome {
    pub noise: NoiseCovariance,
    pub whitened_rank: usize,
    /// One entry per representative, in increasing order, with BH-adjusted p-values.
    pub tests: Vec<TestResult>,
    pub change_points: ChangePointSet,
}

/// Estimates the noise covariance, tests each representative and applies BH at `alpha`.
pub fn pf_stage(
    seq: &FunctionalSequence,
    basis: &BasisSystem,
    reps: &ChangePointSet,
    alpha: f64,
) -> Result<PfOutcome> {
    let noise = estimate_noise_covariance(seq, reps)?;
    let whitener = SpatialWhitener::new(&noise.sigma_hat)?;
    let mut tests = if reps.is_empty() {
        Vec::new()
    } else {
        let regression = ftest::whitened_regression(&difference_rows(seq.values()), basis, &whitener)?;
        ftest::test_representatives(&regression, reps)
    };
    apply_bh(&mut tests, alpha)?;
    let change_points = pf_filter(reps, &tests, alpha);
    Ok(PfOutcome {
        noise,
        whitened_rank: whitener.rank(),
        tests,
        change_points,
    })
}
