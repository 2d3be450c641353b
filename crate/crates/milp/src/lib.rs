//! Solver-agnostic mixed-integer linear programs.
//!
//! [`Model`] is the intermediate representation every formulation builder in
//! this workspace targets. It can be written to free-format MPS (the canonical
//! interchange format) or CPLEX-style LP (for reading), parsed back from MPS,
//! and solved either by the embedded dense simplex / branch-and-bound solver
//! or by an external solver driven through a command template.

mod branch;
mod error;
mod external;
mod lp_format;
mod model;
mod mps;
mod simplex;

pub use branch::{solve_mip, MipOptions};
pub use error::{ModelError, MpsError, SolverError};
pub use external::{parse_solution, write_solution, ExternalSolver, ParsedSolution, SOLVER_CMD_ENV};
pub use lp_format::write_lp;
pub use model::{
    Constraint, Evaluation, Model, ObjSense, Objective, RowSense, VarKind, Variable, Violation, ViolationKind,
    FEASIBILITY_TOL,
};
pub use mps::{read_mps, write_mps};
pub use simplex::{solve_lp, MAX_EMBEDDED_DIM};

use std::time::Duration;

/// Outcome class of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// A node, iteration or time limit stopped the search; `values` holds the
    /// incumbent if one was found.
    Limit,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: u64,
    pub nodes: u64,
    pub wall_time: Duration,
}

/// Result of any solve. `values` is indexed like `Model::variables`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: Status,
    pub objective: f64,
    pub values: Vec<f64>,
    /// Best proven bound in the model's objective sense (an upper bound for
    /// maximization, a lower bound for minimization).
    pub bound: f64,
    pub stats: SolveStats,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn value(&self, model: &Model, name: &str) -> Option<f64> {
        model.var_index(name).map(|j| self.values[j])
    }
}

/// Anything that can solve a [`Model`], either exactly or as its LP relaxation.
pub trait Backend {
    fn solve(&self, model: &Model, relax: bool) -> Result<SolveResult, SolverError>;
}

/// The in-process solver.
#[derive(Debug, Clone, Default)]
pub struct Embedded {
    pub options: MipOptions,
}

impl Backend for Embedded {
    fn solve(&self, model: &Model, relax: bool) -> Result<SolveResult, SolverError> {
        if relax {
            solve_lp(model)
        } else {
            solve_mip(model, &self.options)
        }
    }
}
