//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix row could not be parsed (wrong column count, bad number).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A mandatory table or field is missing from the case file.
    #[error("structural error: {0}")]
    Structure(String),

    /// The case file declares a format version this crate does not read.
    #[error("unsupported case format version '{0}' (expected '2')")]
    UnsupportedVersion(String),

    /// A case-level invariant is violated.
    #[error("invalid case data: {0}")]
    Validation(String),

    /// The electrical model cannot be built from the case.
    #[error("model error: {0}")]
    Model(String),

    /// Aggregate generation capability cannot cover demand.
    #[error("infeasible dispatch: demand {demand_mw} MW outside capability [{min_mw}, {max_mw}] MW (shortfall {shortfall_mw} MW)")]
    InfeasibleDispatch {
        demand_mw: f64,
        min_mw: f64,
        max_mw: f64,
        shortfall_mw: f64,
    },

    /// Gap formula is undefined for a non-positive lower bound.
    #[error("undefined gap: lower bound {0} MW is not positive")]
    UndefinedGap(f64),

    /// Mismatched dimensions between a problem and a candidate point.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Operation requires a different matrix representation.
    #[error("representation mismatch: {0}")]
    Representation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
