//! Detection metrics and the Monte-Carlo benchmark harness.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::Detector;
use crate::error::Result;
use crate::sequence::{ChangePointSet, FunctionalSequence};
use crate::simlab::{generate, SimulationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub annotation_error: usize,
    pub hausdorff_error: f64,
    pub success: bool,
}

/// Difference in the number of change points.
pub fn annotation_error(est: &ChangePointSet, truth: &ChangePointSet) -> usize {
    est.len().abs_diff(truth.len())
}

/// Largest distance from a true change point to its nearest estimate.
///
/// Exactly one empty set gives 1, two empty sets give 0.
pub fn hausdorff_error(est: &ChangePointSet, truth: &ChangePointSet) -> f64 {
    match (est.is_empty(), truth.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => truth
            .iter()
            .map(|b| est.iter().map(|a| a.abs_diff(b)).min().unwrap_or(0))
            .max()
            .unwrap_or(0) as f64,
    }
}

pub fn evaluate(est: &ChangePointSet, truth: &ChangePointSet) -> EvalMetrics {
    let annotation_error = annotation_error(est, truth);
    let hausdorff_error = hausdorff_error(est, truth);
    EvalMetrics {
        annotation_error,
        hausdorff_error,
        success: annotation_error == 0 && hausdorff_error == 0.0,
    }
}

/// Anything that scores candidate change points with BH-adjusted p-values.
///
/// A point is declared at level alpha when its score is at most alpha.
pub trait ChangePointScorer: Sync {
    fn score(&self, seq: &FunctionalSequence) -> Result<Vec<(usize, f64)>>;
}

impl ChangePointScorer for Detector {
    fn score(&self, seq: &FunctionalSequence) -> Result<Vec<(usize, f64)>> {
        Ok(self.detect(seq)?.scored())
    }
}

impl<F> ChangePointScorer for F
where
    F: Fn(&FunctionalSequence) -> Result<Vec<(usize, f64)>> + Sync,
{
    fn score(&self, seq: &FunctionalSequence) -> Result<Vec<(usize, f64)>> {
        self(seq)
    }
}

/// Estimates at one level from scored points.
pub fn declared_at(scored: &[(usize, f64)], alpha: f64) -> ChangePointSet {
    ChangePointSet::new(scored.iter().filter(|s| s.1 <= alpha).map(|s| s.0).collect()).unwrap_or_default()
}

/// One replication of a benchmark cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub seed: u64,
    pub truth: ChangePointSet,
    /// Estimates per alpha, or the error that ended the replication.
    pub estimates: std::result::Result<Vec<ChangePointSet>, String>,
}

impl Replication {
    pub fn metrics(&self, alpha_index: usize) -> Option<EvalMetrics> {
        self.estimates
            .as_ref()
            .ok()
            .map(|e| evaluate(&e[alpha_index], &self.truth))
    }
}

/// Success rates for one (family, scenario) over several alphas.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub spec: SimulationSpec,
    pub alphas: Vec<f64>,
    pub success_rates: Vec<f64>,
    pub replications: Vec<Replication>,
}

impl BenchCell {
    pub fn failures(&self) -> impl Iterator<Item = &Replication> {
        self.replications.iter().filter(|r| r.estimates.is_err())
    }
}

/// Runs `n_replications` datasets with seeds `template.seed + i` through `detector`.
pub fn run_bench<D: ChangePointScorer + ?Sized>(
    template: &SimulationSpec,
    n_replications: usize,
    alphas: &[f64],
    detector: &D,
) -> BenchCell {
    let replications: Vec<Replication> = (0..n_replications as u64)
        .into_par_iter()
        .map(|i| {
            let spec = template.clone().with_seed(template.seed.wrapping_add(i));
            let outcome = generate(&spec).and_then(|ds| {
                let scored = detector.score(&ds.seq)?;
                Ok((ds.truth, alphas.iter().map(|&a| declared_at(&scored, a)).collect()))
            });
            match outcome {
                Ok((truth, estimates)) => Replication {
                    seed: spec.seed,
                    truth,
                    estimates: Ok(estimates),
                },
                Err(e) => {
                    log::warn!("replication with seed {} failed: {e}", spec.seed);
                    Replication {
                        seed: spec.seed,
                        truth: ChangePointSet::empty(),
                        estimates: Err(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let n = n_replications.max(1) as f64;
    let success_rates = (0..alphas.len())
        .map(|a| {
            replications
                .iter()
                .filter(|r| r.metrics(a).is_some_and(|m| m.success))
                .count() as f64
                / n
        })
        .collect();
    BenchCell {
        spec: template.clone(),
        alphas: alphas.to_vec(),
        success_rates,
        replications,
    }
}

/// Table with one row per alpha and one column per cell.
pub fn write_bench_table<W: Write>(writer: W, cells: &[BenchCell]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let mut header = vec!["alpha".to_string()];
    header.extend(cells.iter().map(|c| c.spec.family.to_string()));
    w.write_record(&header)?;
    let alphas = cells.first().map(|c| c.alphas.clone()).unwrap_or_default();
    for (i, alpha) in alphas.iter().enumerate() {
        let mut rec = vec![alpha.to_string()];
        rec.extend(cells.iter().map(|c| c.success_rates[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
