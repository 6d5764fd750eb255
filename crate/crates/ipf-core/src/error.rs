//! Error types shared across the crate.

use thiserror::Error;

/// Errors from model construction and density evaluation.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("nonpositive variance {value:e} in component {index}")]
    NonPositiveVariance { index: usize, value: f64 },
}

/// Errors from the implicit-equation solvers and minimizers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver did not converge within {max_iter} iterations (residual {residual:e})")]
    NonConvergence { max_iter: u32, residual: f64 },
    #[error("objective is not U-shaped on the {side} side of its minimum at {min_location}")]
    NotUShaped {
        side: &'static str,
        min_location: f64,
    },
    #[error("no interior minimum bracket found in [{lo}, {hi}]")]
    MinimizationFailure { lo: f64, hi: f64 },
    #[error("derivative vanishes away from the minimum at x = {x}; Jacobian undefined")]
    SingularJacobian { x: f64 },
    #[error("quadratic form rejected: {reason}")]
    BadQuadraticForm { reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors from the quadrature oracle.
#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid [{lo}, {hi}] truncates posterior mass: boundary density ratio {ratio:e}")]
    TailMass { lo: f64, hi: f64, ratio: f64 },
    #[error("grid needs at least two points, got {0}")]
    GridTooSmall(usize),
}

/// Errors from Robbins-Monro parameter identification.
#[derive(Debug, Error)]
pub enum IdentError {
    #[error("increment series is degenerate (zero denominator in the statistic)")]
    DegenerateIncrements,
    #[error("need at least 3 increments, got {0}")]
    TooFewIncrements(usize),
    #[error("iterate sigma = {sigma:e} left the admissible range [{lo:e}, {hi:e}]")]
    Divergence { sigma: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Filter(#[from] Box<Error>),
}

/// Crate-level error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Ident(#[from] IdentError),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
