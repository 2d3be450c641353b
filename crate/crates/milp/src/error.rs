use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("duplicate constraint name `{0}`")]
    DuplicateConstraint(String),
    #[error("constraint `{constraint}` references unknown variable index {index}")]
    UnknownVariable { constraint: String, index: usize },
    #[error("unknown variable `{0}`")]
    UnknownName(String),
    #[error("variable `{name}` has empty domain [{lower}, {upper}]")]
    EmptyDomain { name: String, lower: f64, upper: f64 },
    #[error("binary variable `{0}` has bounds outside [0, 1]")]
    BinaryBounds(String),
    #[error("name `{0}...` exceeds 255 characters")]
    NameTooLong(String),
    #[error("name `{0}` contains whitespace")]
    NameWhitespace(String),
    #[error("assignment has no value for variable `{0}`")]
    MissingValue(String),
    #[error("assignment has {got} values, model has {expected} variables")]
    AssignmentLength { expected: usize, got: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum MpsError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("model too large for the embedded solver: {0}")]
    TooLarge(String),
    #[error("simplex iteration cap of {0} reached (possible cycling)")]
    IterationCap(u64),
    #[error("numerical trouble: {0}")]
    Numerical(String),
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("could not start solver `{command}`: {source}. Install the solver or point {env} at a command template containing {{mps}} and {{sol}}")]
    Spawn {
        command: String,
        env: &'static str,
        #[source]
        source: std::io::Error,
    },
    #[error("solver command template is empty")]
    EmptyCommand,
    #[error("solver exited with {status}: {stderr}")]
    ExitStatus { status: String, stderr: String },
    #[error("could not parse solution file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("external solution violates the model: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
