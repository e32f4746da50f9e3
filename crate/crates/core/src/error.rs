//! Error type shared by all modules.

use crate::estimation::FitResult;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation
    /// (non-positive lifetime, negative gate time, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates an invariant of its type.
    #[error("invalid config: {0}")]
    Config(String),

    /// A root solve or optimisation has no solution for the requested target.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// Splitter reflectivities of 0 or 1 leave a detector dark, so the
    /// photon-number correction is undefined.
    #[error("degenerate splitter: {0}")]
    DegenerateSplitter(String),

    /// Malformed time-tag stream. `offset` is the byte position of the first
    /// offending record (or line number for the CSV twin format).
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// The nonlinear lifetime search did not converge; the best candidate
    /// found so far is attached.
    #[error("fit did not converge (best residual {})", best.residual_norm)]
    FitDidNotConverge { best: Box<FitResult> },

    /// A quantum-yield solve produced no root consistent with the
    /// calibration inputs.
    #[error("inconsistent calibration: {0}")]
    InconsistentCalibration(String),

    /// Not enough multi-photon events to form an estimate.
    #[error("no estimate: {0}")]
    NoEstimate(String),

    /// The stream does not carry the channels a scheme needs.
    #[error("scheme/stream mismatch: {0}")]
    SchemeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
