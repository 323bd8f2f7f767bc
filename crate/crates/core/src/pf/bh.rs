//! Benjamini-Hochberg step-up adjustment and final filtering.

use crate::error::{Error, Result};
use crate::pf::ftest::TestResult;
use crate::sequence::ChangePointSet;

/// BH-adjusted p-values in input order.
pub fn bh_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::OutOfRange(bad));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        // The ratio is at least 1, so the product never rounds below the raw value.
        running = running.min(p_values[i] * (m as f64 / (rank + 1) as f64));
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}

/// Fills `p_adjusted` and `retained` for a batch of tests.
pub fn apply_bh(results: &mut [TestResult], alpha: f64) -> Result<()> {
    let raw: Vec<f64> = results.iter().map(|r| r.p_raw).collect();
    for (r, adj) in results.iter_mut().zip(bh_adjust(&raw)?) {
        r.p_adjusted = adj.max(r.p_raw);
        r.retained = r.p_adjusted <= alpha;
    }
    Ok(())
}

/// Representatives whose adjusted p-value is at most `alpha`.
pub fn pf_filter(reps: &ChangePointSet, results: &[TestResult], alpha: f64) -> ChangePointSet {
    let kept = reps
        .iter()
        .filter(|&tau| {
            results
                .iter()
                .any(|r| r.representative == tau && r.p_adjusted <= alpha)
        })
        .collect();
    ChangePointSet::new(kept).expect("subset of a valid set")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result(tau: usize, p: f64) -> TestResult {
        TestResult {
            representative: tau,
            f_stat: 0.0,
            df1: 1,
            df2: 10,
            p_raw: p,
            p_adjusted: p,
            retained: false,
            skipped: false,
        }
    }

    #[test]
    fn hand_example() {
        let adj = bh_adjust(&[0.001, 0.02, 0.04, 0.5]).unwrap();
        assert_eq!(adj, vec![0.004, 0.04, 0.04 * (4.0 / 3.0), 0.5]);
        let mut results: Vec<_> = [0.001, 0.02, 0.04, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &p)| result(10 * (i + 1), p))
            .collect();
        apply_bh(&mut results, 0.05).unwrap();
        let reps = ChangePointSet::new(vec![10, 20, 30, 40]).unwrap();
        assert_eq!(pf_filter(&reps, &results, 0.05).indices(), &[10, 20]);
        assert_eq!(results.iter().filter(|r| r.retained).count(), 2);
        assert_eq!(pf_filter(&reps, &results, 1.0), reps);
    }

    #[test]
    fn trivial_cases() {
        assert_eq!(bh_adjust(&[0.3]).unwrap(), vec![0.3]);
        assert_eq!(bh_adjust(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert!(bh_adjust(&[]).unwrap().is_empty());
        assert_eq!(bh_adjust(&[0.1, 1.2]), Err(Error::OutOfRange(1.2)));
        let reps = ChangePointSet::new(vec![5, 9]).unwrap();
        let results = vec![result(5, 1.0), result(9, 1.0)];
        assert!(pf_filter(&reps, &results, 0.05).is_empty());
    }

    #[test]
    fn unsorted_input_maps_back() {
        let adj = bh_adjust(&[0.5, 0.001, 0.04, 0.02]).unwrap();
        assert_eq!(adj, vec![0.5, 0.004, 0.04 * (4.0 / 3.0), 0.04]);
    }

    proptest! {
        #[test]
        fn monotone_bounded_idempotent(p in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
            let adj = bh_adjust(&p).unwrap();
            for (a, q) in adj.iter().zip(&p) {
                prop_assert!(*a >= *q && *a <= 1.0);
            }
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            for w in idx.windows(2) {
                prop_assert!(adj[w[0]] <= adj[w[1]]);
            }
            let again = bh_adjust(&adj).unwrap();
            for (a, b) in again.iter().zip(&adj) {
                prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300) || a >= b);
            }
        }
    }
}
