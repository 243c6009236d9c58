use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh resolution must be at least 2, got {0}")]
    InvalidResolution(usize),

    #[error("coefficient not admissible: {0}")]
    Admissibility(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    CgDidNotConverge { iterations: usize, residual: f64 },

    #[error("nonlinear iteration did not converge: {report}")]
    NonConvergence { report: Box<SolveReport> },

    #[error("evaluation at the probe singularity")]
    Singularity,

    #[error("objective is flat: {0}")]
    FlatObjective(String),

    #[error("line search failed after {backtracks} backtracks at iteration {iteration}")]
    LineSearch { iteration: usize, backtracks: usize },

    #[error("dense factorization failed: {0}")]
    Factorization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::CgDidNotConverge { .. } | Error::NonConvergence { .. } | Error::LineSearch { .. } | Error::Factorization(_))
    }
}
