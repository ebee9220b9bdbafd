use thiserror::Error;

/// Errors produced by the norm machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input has the wrong shape or violates a structural requirement.
    #[error("structural error: {0}")]
    Structural(String),

    /// Two operands live on incompatible spaces.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The metric axioms do not hold (see `validate_metric` for details).
    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    /// Molecule δ(x, x) requested.
    #[error("degenerate molecule: both endpoints are point {0}")]
    DegenerateMolecule(String),

    /// Lipschitz map or functional does not vanish at the base point.
    #[error("map does not vanish at the base point")]
    NotPointed,

    /// An enumeration would exceed its configured size cap.
    #[error("capacity exceeded: {what} is {size}, cap is {cap}")]
    Capacity {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    /// Exponent outside the range an operation supports.
    #[error("unsupported exponent {0}")]
    UnsupportedExponent(String),

    /// Point identifier that is not part of the space.
    #[error("unknown point '{0}'")]
    UnknownPoint(String),

    /// Malformed or unreadable input; the message carries the location.
    #[error("cannot read {what}: {message}")]
    Input { what: String, message: String },

    /// LP solver failure on an instance that should always be solvable.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
