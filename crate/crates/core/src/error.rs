use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed piecewise data or particle arrays.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("negative jump condition violated at {0:?}")]
    NegativeJump(Vec<f64>),

    #[error("zero total mass in window [{lo}, {hi}]")]
    ZeroMass { lo: f64, hi: f64 },

    /// A query left the region where the finite system reproduces the
    /// unbounded dynamics.
    #[error("position {value} outside safe window [{lo}, {hi}]")]
    Window { value: f64, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The operation is only defined for a particular class of initial data.
    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// An internal identity that must hold exactly did not.
    #[error("invariant breach: {0}")]
    Invariant(String),
}
