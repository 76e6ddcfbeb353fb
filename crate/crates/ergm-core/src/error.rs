//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by graph, model, estimation and sampling routines.
#[derive(Debug, Error)]
pub enum ErgmError {
    #[error("node index {index} out of range for graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dyad ({i}, {j}) is not canonical: require 0 <= i < j < n")]
    NonCanonicalDyad { i: usize, j: usize },

    #[error("model references attribute `{0}` which is not present in the graph")]
    MissingAttribute(String),

    #[error("model/data mismatch: {0}")]
    ModelMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite parameter vector")]
    NonFiniteParameter,

    #[error("log target density at the initial point is not finite")]
    BadInitialState,

    #[error("optimizer did not converge in {max_iters} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { max_iters: usize, grad_norm: f64 },

    #[error("parameter norm exceeded {bound}; the MPLE may not exist (separation or degeneracy)")]
    Separation { bound: f64 },

    #[error("matrix is not negative definite: {0}")]
    NotNegativeDefinite(String),

    #[error("calibration infeasible: {0}")]
    CalibrationInfeasible(String),

    #[error("need at least {need} draws for this estimate, got {got}")]
    InsufficientSample { need: usize, got: usize },

    #[error("simulated graphs saturate at the empty or complete graph; restart from a different point")]
    DegenerateSimulation,

    #[error("effective sample size undefined: {0}")]
    UndefinedEss(String),

    #[error("operation requires {expected}-dimensional samples, got {actual}")]
    UnsupportedDimension { expected: usize, actual: usize },

    #[error("exact enumeration capped at n <= {cap}, got n = {n}")]
    EnumerationCap { n: usize, cap: usize },

    #[error("invalid model term: {0}")]
    InvalidTerm(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ErgmError>;
