//! BIC grid search over (lambda, eta, kappa).

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::BasisSystem;
use crate::gs::{group_ls_norms, gs_fit_values};
use crate::pf::{estimate_pilot_covariance, whitened_regression, LevelRegression, SpatialWhitener};
use crate::refine::refine;
use crate::sequence::{difference_rows, ChangePointSet, DetectorConfig, FunctionalSequence, LambdaScale};

/// BIC of one refit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicScore {
    pub value: f64,
    pub rss: f64,
    pub df: usize,
    pub n: usize,
    /// RSS was exactly zero; `value` is negative infinity.
    pub degenerate: bool,
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub lambda: f64,
    pub eta: f64,
    pub kappa: usize,
    pub bic: f64,
    pub n_candidates: usize,
    pub n_representatives: usize,
    #[serde(default)]
    pub degenerate: bool,
}

/// Level-scale regression used for BIC, whitened by the pilot noise covariance.
pub fn bic_regression(seq: &FunctionalSequence, basis: &BasisSystem) -> Result<LevelRegression> {
    let pilot = estimate_pilot_covariance(seq.values())?;
    let whitener = SpatialWhitener::new(&pilot.sigma_hat)?;
    whitened_regression(&difference_rows(seq.values()), basis, &whitener)
}

/// `n log(RSS/n) + df log n` with `n = T d`.
pub fn bic_from_regression(regression: &LevelRegression, reps: &ChangePointSet) -> Result<BicScore> {
    let (rss, df) = regression.rss(reps);
    let n = regression.n_obs();
    if df >= n {
        return Err(Error::InvalidArgument(format!("BIC needs df < n ({df} >= {n})")));
    }
    let nf = n as f64;
    let degenerate = rss <= 1e-300 || rss <= 1e-26 * regression.tss();
    let value = if degenerate {
        f64::NEG_INFINITY
    } else {
        nf * (rss / nf).ln() + df as f64 * nf.ln()
    };
    Ok(BicScore {
        value,
        rss,
        df,
        n,
        degenerate,
    })
}

pub fn bic_score(seq: &FunctionalSequence, reps: &ChangePointSet, basis: &BasisSystem) -> Result<BicScore> {
    bic_from_regression(&bic_regression(seq, basis)?, reps)
}

/// Lambda values after applying the configured scale.
pub fn resolve_lambda_grid(differenced: &DMatrix<f64>, basis: &BasisSystem, config: &DetectorConfig) -> Result<Vec<f64>> {
    match config.lambda_scale {
        LambdaScale::Absolute => Ok(config.lambda_grid.clone()),
        LambdaScale::Relative => {
            let norms = group_ls_norms(differenced, basis)?;
            let scale = median_positive(&norms[1..]).unwrap_or(1.0);
            Ok(config.lambda_grid.iter().map(|l| l * scale).collect())
        }
    }
}

fn median_positive(v: &[f64]) -> Option<f64> {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return None;
    }
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let m = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
    if m > 0.0 {
        Some(m)
    } else {
        s.iter().copied().filter(|&x| x > 0.0).reduce(f64::min)
    }
}

/// Outcome of the exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub best: TuningRecord,
    pub best_representatives: ChangePointSet,
    pub best_candidates: ChangePointSet,
    pub all: Vec<TuningRecord>,
    pub lambda_grid: Vec<f64>,
}

/// Total order used to pick the best record: lower BIC, then larger lambda, larger kappa, smaller eta.
fn better(a: &TuningRecord, b: &TuningRecord) -> bool {
    a.bic
        .total_cmp(&b.bic)
        .then(b.lambda.total_cmp(&a.lambda))
        .then(b.kappa.cmp(&a.kappa))
        .then(a.eta.total_cmp(&b.eta))
        .is_lt()
}

pub fn grid_search(seq: &FunctionalSequence, basis: &BasisSystem, config: &DetectorConfig) -> Result<GridSearch> {
    config.validate()?;
    let differenced = difference_rows(seq.values());
    let lambda_grid = resolve_lambda_grid(&differenced, basis, config)?;
    let regression = bic_regression(seq, basis)?;
    let cache: Mutex<HashMap<ChangePointSet, BicScore>> = Mutex::new(HashMap::new());

    let pairs: Vec<(f64, f64)> = lambda_grid
        .iter()
        .flat_map(|&l| config.eta_grid.iter().map(move |&e| (l, e)))
        .collect();
    type Scored = (TuningRecord, ChangePointSet, ChangePointSet);
    let per_pair: Vec<Vec<Scored>> = pairs
        .par_iter()
        .map(|&(lambda, eta)| -> Result<Vec<Scored>> {
            let fit = gs_fit_values(&differenced, basis, lambda, eta, config.gamma)?;
            config
                .kappa_grid
                .iter()
                .map(|&kappa| {
                    let reps = refine(seq, &fit.candidates, kappa)?;
                    let cached = cache.lock().expect("cache lock").get(&reps).copied();
                    let score = match cached {
                        Some(s) => s,
                        None => {
                            let s = bic_from_regression(&regression, &reps)?;
                            cache.lock().expect("cache lock").insert(reps.clone(), s);
                            s
                        }
                    };
                    let record = TuningRecord {
                        lambda,
                        eta,
                        kappa,
                        bic: score.value,
                        n_candidates: fit.candidates.len(),
                        n_representatives: reps.len(),
                        degenerate: score.degenerate,
                    };
                    Ok((record, reps, fit.candidates.clone()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let scored: Vec<Scored> = per_pair.into_iter().flatten().collect();
    let best_idx = (0..scored.len())
        .reduce(|i, j| if better(&scored[j].0, &scored[i].0) { j } else { i })
        .ok_or_else(|| Error::InvalidConfig("empty grid".into()))?;
    let (best, best_representatives, best_candidates) = scored[best_idx].clone();
    Ok(GridSearch {
        best,
        best_representatives,
        best_candidates,
        all: scored.into_iter().map(|s| s.0).collect(),
        lambda_grid,
    })
}
