use thiserror::Error;

/// Errors raised anywhere in the detector, simulation lab, or evaluation kit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite entry at row {row}, column {col}")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("ragged input: row {row} has {found} columns, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("grid has {grid} points but the data has {columns} columns")]
    GridMismatch { grid: usize, columns: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid needs at least 3 points for second differences, got {0}")]
    GridTooSmall(usize),

    #[error("need at least {needed} curves, got {found}")]
    DegenerateSample { needed: usize, found: usize },

    #[error("index {index} is outside 2..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("could not parse input: {0}")]
    Parse(String),

    #[error("i/o failure: {0}")]
    Io(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("penalty argument must be nonnegative, got {0}")]
    NegativeArgument(f64),

    #[error("p-value {0} is outside [0, 1]")]
    OutOfRange(f64),

    #[error("family {family} cannot be paired with noise {noise}")]
    InvalidFamilyNoisePair { family: String, noise: String },

    #[error("too few curves for covariance estimation: {0} degrees of freedom")]
    TooFewCurves(usize),

    #[error("CUSUM window of {0} curves is too small")]
    WindowTooSmall(usize),

    #[error("operator of dimension {0} is too large to materialize")]
    TooLargeToMaterialize(usize),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("Cholesky factorization failed after jitter escalation")]
    CholeskyFailure,

    #[error("group design matrix is singular")]
    SingularGroupGram,

    #[error("noise covariance has rank zero after truncation")]
    SingularCovariance,

    #[error("design matrix is rank deficient after whitening")]
    RankDeficientDesign,

    #[error("Bessel function overflow for order {nu} at {x}")]
    BesselOverflow { nu: f64, x: f64 },
}

impl Error {
    /// True for errors caused by malformed input rather than numerical breakdown.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::NotPsd(_)
                | Error::CholeskyFailure
                | Error::SingularGroupGram
                | Error::SingularCovariance
                | Error::RankDeficientDesign
                | Error::BesselOverflow { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
