use nalgebra::DVector;
use thiserror::Error;

use crate::penalty::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid convex set: {0}")]
    InvalidSet(String),

    #[error("Dykstra projection did not converge after {cycles} cycles (residual {residual:e})")]
    DykstraNotConverged {
        iterate: DVector<f64>,
        residual: f64,
        cycles: usize,
    },

    #[error("line search stagnated at SPG iteration {iteration} (f = {value:e})")]
    LineSearchStagnation {
        best: DVector<f64>,
        value: f64,
        iteration: usize,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("penalty loop stopped after {} outer iterations without meeting the stopping test", report.outer_iterations)]
    PenaltyNotConverged { report: Box<SolveReport> },

    #[error("subproblem {outer} failed: {source}")]
    Subproblem {
        outer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("problem too large for the oracle: {0}")]
    OracleTooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
