use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("non-finite integrand value at node {index}")]
    NonFiniteIntegrand { index: usize },

    #[error("path is not strictly increasing at node {index}")]
    NotIncreasing { index: usize },

    #[error("histograms were built on different bin edges")]
    MismatchedEdges,

    #[error("degenerate predictor matrix for pair ({s}, {t})")]
    DegeneratePredictors { s: usize, t: usize },

    #[error("ensemble too small: {got} paths, need at least {need}")]
    EnsembleTooSmall { got: usize, need: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("trajectory aborted at step {step}: {reason}")]
    Aborted { step: usize, reason: String },

    #[error("too many aborted trajectories: {aborted} of {total}")]
    TooManyAborts { aborted: usize, total: usize },

    #[error("unbounded observable `{0}` where a bounded one is required")]
    Unbounded(String),

    #[error("horizon too short: tail bound {tail:e} exceeds tolerance {tolerance:e}")]
    HorizonTooShort { tail: f64, tolerance: f64 },

    #[error("inadmissible test function: {0}")]
    Inadmissible(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
