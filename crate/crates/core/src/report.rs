//! Serializable detection report.

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::pf::TestResult;
use crate::sequence::{DetectorConfig, LambdaScale};

pub const SCHEMA_VERSION: u32 = 1;

/// Hyperparameters selected for this run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub lambda: f64,
    pub eta: f64,
    pub kappa: usize,
    pub gamma: f64,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub fve: f64,
}

/// The full configuration the run resolved to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub lambda_grid: Vec<f64>,
    pub lambda_grid_input: Vec<f64>,
    pub lambda_scale: LambdaScale,
    pub eta_grid: Vec<f64>,
    pub kappa_grid: Vec<usize>,
    pub gamma: f64,
    pub fdr_alpha: f64,
    pub fve_threshold: f64,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub n_curves: usize,
    pub n_grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub schema_version: u32,
    pub change_points: Vec<usize>,
    pub candidates: Vec<usize>,
    pub representatives: Vec<usize>,
    pub tests: Vec<TestResult>,
    pub params: ReportParams,
    pub config: ResolvedConfig,
    pub timing_ms: u64,
}

/// Extra run metadata echoed into the report.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunInfo {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub timing_ms: u64,
}

impl DetectionReport {
    pub fn new(detection: &Detection, config: &DetectorConfig, info: RunInfo) -> Self {
        let best = &detection.tuning.best;
        let tests = detection
            .pf
            .tests
            .iter()
            .map(|t| TestResult {
                // JSON has no infinity; exact fits report the largest finite statistic.
                f_stat: t.f_stat.min(f64::MAX),
                ..t.clone()
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            change_points: detection.change_points.indices().to_vec(),
            candidates: detection.fit.candidates.indices().to_vec(),
            representatives: detection.representatives.indices().to_vec(),
            tests,
            params: ReportParams {
                lambda: best.lambda,
                eta: best.eta,
                kappa: best.kappa,
                gamma: config.gamma,
                alpha: config.fdr_alpha,
                k: detection.basis.k(),
                fve: detection.basis.fve(),
            },
            config: ResolvedConfig {
                lambda_grid: detection.tuning.lambda_grid.clone(),
                lambda_grid_input: config.lambda_grid.clone(),
                lambda_scale: config.lambda_scale,
                eta_grid: config.eta_grid.clone(),
                kappa_grid: config.kappa_grid.clone(),
                gamma: config.gamma,
                fdr_alpha: config.fdr_alpha,
                fve_threshold: config.fve_threshold,
                seed: info.seed,
                threads: info.threads,
                n_curves: detection.fit.blocks.alpha.nrows(),
                n_grid: detection.basis.d(),
            },
            timing_ms: info.timing_ms,
        }
    }
}
