//! Synthetic functional sequences with known change points.

mod matern;
mod sampling;

pub use matern::{matern_cov, MaternParams};
pub use sampling::{sample_gp, sample_tp, GaussianSampler};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{ChangePointSet, FunctionalSequence, Grid};

/// Number of distinct regimes; segments beyond the fifth cycle back to the first.
pub const N_REGIMES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Constant,
    Symmetric,
    Asymmetric,
    /// Piecewise-stationary autoregressions.
    Sbar,
    Benchmark,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Constant,
        Family::Symmetric,
        Family::Asymmetric,
        Family::Sbar,
        Family::Benchmark,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::Symmetric => "symmetric",
            Family::Asymmetric => "asymmetric",
            Family::Sbar => "sbar",
            Family::Benchmark => "benchmark",
        }
    }

    /// Noise model used when none is given.
    pub fn default_noise(&self) -> NoiseModel {
        match self {
            Family::Sbar | Family::Benchmark => NoiseModel::IidNormal,
            _ => NoiseModel::Gp,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    /// Gaussian process with Matérn covariance.
    Gp,
    /// Student-t process with the given degrees of freedom.
    Tp { df: u32 },
    /// Independent standard normal noise at every grid point.
    IidNormal,
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Gp => f.write_str("gp"),
            NoiseModel::Tp { df } => write!(f, "tp({df})"),
            NoiseModel::IidNormal => f.write_str("iid_normal"),
        }
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    /// Accepts `gp`, `tp` (df = 3), `tp:<df>` and `iid`/`iid_normal`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gp" => Ok(NoiseModel::Gp),
            "tp" => Ok(NoiseModel::Tp { df: 3 }),
            "iid" | "iid_normal" => Ok(NoiseModel::IidNormal),
            _ => s
                .strip_prefix("tp:")
                .and_then(|df| df.parse().ok())
                .filter(|&df| df >= 1)
                .map(|df| NoiseModel::Tp { df })
                .ok_or_else(|| Error::InvalidArgument(format!("unknown noise model {s:?}"))),
        }
    }
}

/// Everything needed to reproduce one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub family: Family,
    /// Number of change points M.
    pub m: usize,
    pub noise: NoiseModel,
    /// Number of grid points.
    pub d: usize,
    pub seed: u64,
    /// Inclusive bounds of the uniform integer segment-length law.
    pub segment_lengths: (usize, usize),
    pub matern: MaternParams,
    /// Discarded autoregression steps at the start of each regime.
    pub burn_in: usize,
}

impl SimulationSpec {
    pub fn new(family: Family, m: usize, seed: u64) -> Self {
        Self {
            family,
            m,
            noise: family.default_noise(),
            d: 30,
            seed,
            segment_lengths: (100, 200),
            matern: MaternParams::default(),
            burn_in: 50,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_segment_lengths(mut self, lo: usize, hi: usize) -> Self {
        self.segment_lengths = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pair_ok = match self.family {
            Family::Sbar | Family::Benchmark => self.noise == NoiseModel::IidNormal,
            _ => self.noise != NoiseModel::IidNormal,
        };
        if !pair_ok {
            return Err(Error::InvalidFamilyNoisePair {
                family: self.family.to_string(),
                noise: self.noise.to_string(),
            });
        }
        let (lo, hi) = self.segment_lengths;
        if lo < 1 || hi < lo {
            return Err(Error::InvalidArgument(format!("bad segment length range [{lo}, {hi}]")));
        }
        if self.d < 3 {
            return Err(Error::GridTooSmall(self.d));
        }
        if let NoiseModel::Tp { df: 0 } = self.noise {
            return Err(Error::InvalidArgument("t noise needs df >= 1".into()));
        }
        self.matern.validate()
    }
}

/// Synthetic sequence with its true change points.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub seq: FunctionalSequence,
    pub truth: ChangePointSet,
}

/// Mean function of `regime` (0-based) for the mean-shift families.
pub fn mean_function(family: Family, regime: usize, x: f64) -> f64 {
    use std::f64::consts::PI;
    let mu2 = |x: f64| -1.0 - 100.0 * (x - 0.1) * (x - 0.3) * (x - 0.5) * (x - 0.9);
    match (family, regime % N_REGIMES) {
        (Family::Constant, i) => [0.0, 5.0, 7.0, 11.0, 8.0][i],
        (Family::Symmetric | Family::Asymmetric, 0) => 5.0 * x * x - (1.0 - 20.0 * x).exp(),
        (Family::Symmetric | Family::Asymmetric, 1) => mu2(x),
        (Family::Symmetric | Family::Asymmetric, 2) => mu2(x) - 2.0 * (1.0 + 10.0 * PI * x).sin().abs(),
        (Family::Symmetric | Family::Asymmetric, 3) => 1.0 + 3.0 * x * x - 5.0 * x.powi(3) - (1.0 + 10.0 * PI * x).sin(),
        (Family::Symmetric | Family::Asymmetric, _) => 3.0 * x * x - 5.0 * x.powi(3),
        (Family::Benchmark, 0) => 0.0,
        (Family::Benchmark, 1) => 3.0 * x,
        (Family::Benchmark, 2) => 6.0 - 2.0 * x * x,
        (Family::Benchmark, 3) => x.exp(),
        (Family::Benchmark, _) => 7.0 * x.powi(3),
        (Family::Sbar, _) => 0.0,
    }
}

/// `(phi1, phi2, intercept)` of the autoregression for `regime`.
pub fn sbar_coefficients(regime: usize) -> (f64, f64, f64) {
    match regime % N_REGIMES {
        0 | 3 => (0.9, 0.0, 0.0),
        1 | 4 => (1.32, -0.81, 2.0),
        _ => (-0.5, 0.1, 1.0),
    }
}

fn softplus(g: f64) -> f64 {
    if g > 30.0 {
        g + (-g).exp().ln_1p()
    } else {
        g.exp().ln_1p()
    }
}

/// Draws a labeled dataset; a pure function of `spec`.
pub fn generate(spec: &SimulationSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.segment_lengths;
    let lengths: Vec<usize> = (0..=spec.m).map(|_| rng.random_range(lo..=hi)).collect();
    let t_len: usize = lengths.iter().sum();
    let grid = Grid::equispaced(spec.d)?;
    let x = grid.points().to_vec();
    let d = spec.d;
    let mut values = DMatrix::zeros(t_len, d);

    let mut truth = Vec::with_capacity(spec.m);
    let mut start = 0;
    for (seg, &n) in lengths.iter().enumerate() {
        if seg > 0 {
            truth.push(start + 1);
        }
        start += n;
    }

    match spec.family {
        Family::Sbar => fill_sbar(&mut values, &lengths, spec.burn_in, &mut rng),
        family => {
            let noise = match spec.noise {
                NoiseModel::IidNormal => None,
                _ => Some(GaussianSampler::new(DVector::zeros(d), &matern_cov(&grid, &spec.matern)?)?),
            };
            let mut row = 0;
            for (seg, &n) in lengths.iter().enumerate() {
                let mean: Vec<f64> = x.iter().map(|&xj| mean_function(family, seg, xj)).collect();
                for _ in 0..n {
                    let eps = match (&noise, spec.noise) {
                        (Some(s), NoiseModel::Tp { df }) => s.draw_t(df as f64, &mut rng)?,
                        (Some(s), _) => s.draw_centered(&mut rng),
                        (None, _) => DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)),
                    };
                    for j in 0..d {
                        let g = mean[j] + eps[j];
                        values[(row, j)] = if family == Family::Asymmetric { softplus(g) } else { g };
                    }
                    row += 1;
                }
            }
        }
    }

    Ok(LabeledDataset {
        seq: FunctionalSequence::new(values, grid)?,
        truth: ChangePointSet::new(truth)?,
    })
}

fn fill_sbar(values: &mut DMatrix<f64>, lengths: &[usize], burn_in: usize, rng: &mut ChaCha8Rng) {
    let d = values.ncols();
    let mut prev1 = vec![0.0; d];
    let mut prev2 = vec![0.0; d];
    let mut row = 0;
    for (seg, &n) in lengths.iter().enumerate() {
        let (phi1, phi2, c) = sbar_coefficients(seg);
        for step in 0..burn_in + n {
            for j in 0..d {
                let e: f64 = StandardNormal.sample(rng);
                let v = phi1 * prev1[j] + phi2 * prev2[j] + c + e;
                prev2[j] = prev1[j];
                prev1[j] = v;
                if step >= burn_in {
                    values[(row, j)] = v;
                }
            }
            if step >= burn_in {
                row += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_change_constant_family() {
        let ds = generate(&SimulationSpec::new(Family::Constant, 0, 1)).unwrap();
        assert!(ds.truth.is_empty());
        assert!(ds.seq.values().iter().all(|v| v.abs() < 0.2));
        let mean = ds.seq.values().mean();
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn single_change_location() {
        for seed in 0..20 {
            let ds = generate(&SimulationSpec::new(Family::Symmetric, 1, seed)).unwrap();
            let tau = ds.truth.indices()[0];
            assert!((101..=201).contains(&tau));
            assert!(ds.seq.len() - (tau - 1) >= 100);
        }
    }

    #[test]
    fn five_changes_with_bounded_gaps() {
        for family in Family::ALL {
            let ds = generate(&SimulationSpec::new(family, 5, 3)).unwrap();
            let t = ds.truth.indices();
            assert_eq!(t.len(), 5);
            assert!((101..=201).contains(&t[0]));
            for w in t.windows(2) {
                assert!((100..=200).contains(&(w[1] - w[0])));
            }
            assert!((100..=200).contains(&(ds.seq.len() + 1 - t[4])));
        }
    }

    #[test]
    fn deterministic_and_positive() {
        let spec = SimulationSpec::new(Family::Asymmetric, 5, 42).with_noise(NoiseModel::Tp { df: 3 });
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert!(a.seq.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn segment_length_law() {
        let mut lens = Vec::new();
        for seed in 0..1000 {
            let ds = generate(&SimulationSpec::new(Family::Constant, 1, seed).with_d(3)).unwrap();
            let tau = ds.truth.indices()[0];
            lens.push(tau - 1);
            lens.push(ds.seq.len() + 1 - tau);
        }
        assert!(lens.iter().all(|l| (100..=200).contains(l)));
        let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
        assert!((mean - 150.0).abs() < 3.0);
    }

    #[test]
    fn family_noise_pairing() {
        let bad = SimulationSpec::new(Family::Sbar, 1, 0).with_noise(NoiseModel::Gp);
        assert!(matches!(generate(&bad), Err(Error::InvalidFamilyNoisePair { .. })));
        let bad = SimulationSpec::new(Family::Symmetric, 1, 0).with_noise(NoiseModel::IidNormal);
        assert!(matches!(generate(&bad), Err(Error::InvalidFamilyNoisePair { .. })));
    }

    #[test]
    fn sbar_regime_levels() {
        // Stationary means: 0 for phi = 0.9, 2 / (1 - 1.32 + 0.81) for the second regime.
        let ds = generate(&SimulationSpec::new(Family::Sbar, 1, 8).with_segment_lengths(2000, 2000)).unwrap();
        let v = ds.seq.values();
        let first = v.rows(0, 2000).mean();
        let second = v.rows(2000, 2000).mean();
        assert!(first.abs() < 0.3);
        assert!((second - 2.0 / 0.49).abs() < 0.3);
    }

    #[test]
    fn parsing() {
        assert_eq!("Benchmark".parse::<Family>().unwrap(), Family::Benchmark);
        assert_eq!("tp:5".parse::<NoiseModel>().unwrap(), NoiseModel::Tp { df: 5 });
        assert_eq!("tp".parse::<NoiseModel>().unwrap(), NoiseModel::Tp { df: 3 });
        assert!("tp:0".parse::<NoiseModel>().is_err());
        assert!("weird".parse::<Family>().is_err());
    }
}
