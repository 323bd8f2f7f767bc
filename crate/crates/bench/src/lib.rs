//! Shared fixtures for the criterion benchmarks.

use gspf::simlab::{generate, Family, LabeledDataset, SimulationSpec};
use gspf::{BasisSystem, Detector};

/// A simulated dataset with the detector's basis already computed.
pub struct Fixture {
    pub name: String,
    pub data: LabeledDataset,
    pub basis: BasisSystem,
}

pub fn fixture(family: Family, m: usize, seed: u64) -> Fixture {
    let data = generate(&SimulationSpec::new(family, m, seed)).expect("simulation succeeds");
    let basis = Detector::default().basis(&data.seq).expect("basis succeeds");
    Fixture {
        name: format!("{family}_m{m}"),
        data,
        basis,
    }
}

/// The benchmark matrix: a single change and the five-change scenario.
pub fn standard_fixtures() -> Vec<Fixture> {
    vec![fixture(Family::Symmetric, 1, 7), fixture(Family::Symmetric, 5, 7)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_match_their_scenarios() {
        let f = standard_fixtures();
        assert_eq!(f[0].data.truth.len(), 1);
        assert_eq!(f[1].data.truth.len(), 5);
        assert_eq!(f[1].basis.d(), 30);
        assert_eq!(f[1].name, "symmetric_m5");
    }
}
