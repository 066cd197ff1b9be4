use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size mismatch: expected {expected} values, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A Robin coefficient varies along a box face, so the cutoff
    /// construction cannot represent it.
    #[error("{coefficient} varies by {variation:e} along face {face}; supply g1, g2 analytically")]
    NonConstantPerFace {
        coefficient: &'static str,
        face: String,
        variation: f64,
    },

    #[error("leaving rate a1 must be positive, found {value} at {location}")]
    NonPositiveLeavingRate { value: f64, location: String },

    #[error("incoming rate a2 must be nonnegative, found {value} at {location}")]
    NegativeIncomingRate { value: f64, location: String },

    #[error("a2/a1 differs between faces ({first} vs {second}); g2 = a2/a1 cannot be continuous on the boundary")]
    DiscontinuousRobinRatio { first: f64, second: f64 },

    #[error("{solver} did not converge: {iterations} iterations, relative residual {residual:e}")]
    SolverDivergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("CFL/positivity number {cfl} exceeds the admissible bound {limit}")]
    CflViolation { cfl: f64, limit: f64 },

    #[error(transparent)]
    Expr(#[from] ParseError),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
