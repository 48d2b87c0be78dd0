use thiserror::Error;

use crate::galerkin::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operation requires a bounded domain, grid is periodic")]
    NoBoundary,

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid boundary data: {0}")]
    InvalidBoundaryData(String),

    #[error("linear solve failed ({what}): relative residual {residual:.3e}")]
    SolverFailure { what: String, residual: f64 },

    #[error("eigensolver did not converge: worst relative residual {worst:.3e} after {krylov_dim} Krylov vectors")]
    EigenNonConvergence {
        worst: f64,
        krylov_dim: usize,
        residuals: Vec<f64>,
    },

    #[error(
        "initial datum incompatible with boundary data: max mismatch {mismatch:.3e} > {tol:.3e}"
    )]
    Compatibility { mismatch: f64, tol: f64 },

    #[error("solution blew up at step {step}")]
    Blowup {
        step: usize,
        partial: Box<Trajectory>,
    },

    #[error("outside the small-data regime: {0}")]
    RegimeViolation(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        residuals: Vec<f64>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
