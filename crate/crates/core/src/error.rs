use krevise_milp::{ModelError, SolverError};
use thiserror::Error;

use crate::tree::TreeViolation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("invalid tree: {0}")]
    InvalidTree(#[from] TreeViolation),
    #[error("{what} is {got}, above the limit of {limit}")]
    TooLarge {
        what: &'static str,
        limit: usize,
        got: usize,
    },
    #[error("tree generation failed after {attempts} attempts (last attempt had {last_size} nodes)")]
    Generation { attempts: usize, last_size: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("cut loop did not converge after {iterations} rounds (best bound {bound})")]
    NonConvergence { iterations: usize, bound: f64 },
    #[error("solver returned status {0}")]
    SolveStatus(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
