//! End-to-end pipeline: basis, tuning, selection, election and testing.

use crate::error::Result;
use crate::fpca::{estimate_covariance, fpca_basis, remove_nugget, BasisSystem};
use crate::gs::{gs_fit_values, GsResult};
use crate::pf::{pf_stage, PfOutcome};
use crate::refine::{elect_representative_values, merge_candidates, CandidateCluster};
use crate::sequence::{difference_rows, ChangePointSet, DetectorConfig, FunctionalSequence};
use crate::tuning::{grid_search, GridSearch};

/// Two-stage change-point detector.
#[derive(Debug, Clone, Default)]
pub struct Detector {
    config: DetectorConfig,
}

/// Every intermediate product of one detection run.
#[derive(Debug, Clone)]
pub struct Detection {
    pub basis: BasisSystem,
    pub tuning: GridSearch,
    /// Group fit at the selected (lambda, eta).
    pub fit: GsResult,
    pub clusters: Vec<CandidateCluster>,
    pub representatives: ChangePointSet,
    pub pf: PfOutcome,
    pub change_points: ChangePointSet,
}

impl Detection {
    /// Change points that survive BH at another level; adjusted p-values do not depend on it.
    pub fn change_points_at(&self, alpha: f64) -> ChangePointSet {
        let kept = self
            .pf
            .tests
            .iter()
            .filter(|t| t.p_adjusted <= alpha)
            .map(|t| t.representative)
            .collect();
        ChangePointSet::new(kept).expect("representatives are valid indices")
    }

    /// Representatives paired with their BH-adjusted p-values.
    pub fn scored(&self) -> Vec<(usize, f64)> {
        self.pf
            .tests
            .iter()
            .map(|t| (t.representative, t.p_adjusted))
            .collect()
    }
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// FPCA basis of the pooled raw-curve covariance with its nugget removed.
    pub fn basis(&self, seq: &FunctionalSequence) -> Result<BasisSystem> {
        let cov = remove_nugget(&estimate_covariance(seq.values())?);
        fpca_basis(&cov, seq.grid(), self.config.fve_threshold)
    }

    pub fn detect(&self, seq: &FunctionalSequence) -> Result<Detection> {
        let basis = self.basis(seq)?;
        let tuning = grid_search(seq, &basis, &self.config)?;
        let differenced = difference_rows(seq.values());
        let fit = gs_fit_values(
            &differenced,
            &basis,
            tuning.best.lambda,
            tuning.best.eta,
            self.config.gamma,
        )?;
        let clusters = merge_candidates(&fit.candidates, tuning.best.kappa, seq.len());
        let weights = seq.grid().quadrature_weights();
        let reps = clusters
            .iter()
            .map(|c| elect_representative_values(c, seq.values(), &weights))
            .collect::<Result<Vec<_>>>()?;
        let representatives = ChangePointSet::new(reps)?;
        let pf = pf_stage(seq, &basis, &representatives, self.config.fdr_alpha)?;
        let change_points = pf.change_points.clone();
        Ok(Detection {
            basis,
            tuning,
            fit,
            clusters,
            representatives,
            pf,
            change_points,
        })
    }
}
