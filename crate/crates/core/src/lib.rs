//! Two-stage multiple change-point detection for sequences of curves.
//!
//! Stage one selects candidate change times with a group-MCP penalized regression on
//! the differenced curves. Candidates are merged into clusters, one representative per
//! cluster is elected by a functional CUSUM, and stage two keeps the representatives
//! whose partial F-tests survive Benjamini-Hochberg control of the false discovery rate.
//!
//! ```no_run
//! use gspf::{simlab, Detector};
//!
//! let data = simlab::generate(&simlab::SimulationSpec::new(simlab::Family::Symmetric, 1, 7))?;
//! let detection = Detector::default().detect(&data.seq)?;
//! println!("{:?}", detection.change_points.indices());
//! # Ok::<(), gspf::Error>(())
//! ```

pub mod detector;
pub mod error;
pub mod evalkit;
pub mod fpca;
pub mod gs;
pub mod io;
pub mod linalg;
pub mod pf;
pub mod refine;
pub mod report;
pub mod sequence;
pub mod simlab;
pub mod special;
pub mod tuning;

pub use detector::{Detection, Detector};
pub use error::{Error, Result};
pub use fpca::BasisSystem;
pub use report::DetectionReport;
pub use sequence::{
    difference, validate_csv_matrix, ChangePointSet, DetectorConfig, DifferencedSequence, FunctionalSequence, Grid,
    LambdaScale,
};
