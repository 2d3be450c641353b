//! Subprocess bridge to an external MILP solver over MPS files.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use crate::error::SolverError;
use crate::model::{Model, ObjSense};
use crate::mps::write_mps;
use crate::{Backend, SolveResult, SolveStats, Status};

/// Environment variable holding the default command template.
pub const SOLVER_CMD_ENV: &str = "KREVISE_SOLVER_CMD";

/// Solution read back from a solver's output file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSolution {
    pub status: Status,
    pub objective: Option<f64>,
    pub values: HashMap<String, f64>,
}

/// Parses either the "name value" per-line convention (with `#` comments, as
/// in Gurobi `.sol` files) or CBC's native solution file.
pub fn parse_solution(text: &str) -> Result<ParsedSolution, String> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if !first.trim_start().starts_with('#') && first.contains("objective value") {
        return parse_cbc(text);
    }
    let mut values = HashMap::new();
    let mut objective = None;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((_, v)) = comment.split_once("Objective value =") {
                objective = v.trim().parse().ok();
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(name), Some(value), None) = (it.next(), it.next(), it.next()) else {
            return Err(format!("line {}: expected `name value`", k + 1));
        };
        let value: f64 = value
            .parse()
            .map_err(|_| format!("line {}: bad value `{value}`", k + 1))?;
        values.insert(name.to_string(), value);
    }
    if values.is_empty() && objective.is_none() {
        return Err("no variable values found".into());
    }
    Ok(ParsedSolution {
        status: Status::Optimal,
        objective,
        values,
    })
}

fn parse_cbc(text: &str) -> Result<ParsedSolution, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().unwrap_or("");
    let lower = head.to_ascii_lowercase();
    let status = if lower.starts_with("optimal") {
        Status::Optimal
    } else if lower.contains("infeasible") {
        Status::Infeasible
    } else if lower.contains("unbounded") {
        Status::Unbounded
    } else {
        Status::Limit
    };
    let objective = head
        .rsplit("objective value")
        .next()
        .and_then(|v| v.trim().parse().ok());
    let mut values = HashMap::new();
    for (k, line) in lines.enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().filter(|t| *t != "**").collect();
        if tokens.len() < 3 {
            return Err(format!("line {}: expected `index name value`", k + 2));
        }
        let value: f64 = tokens[2]
            .parse()
            .map_err(|_| format!("line {}: bad value `{}`", k + 2, tokens[2]))?;
        values.insert(tokens[1].to_string(), value);
    }
    Ok(ParsedSolution {
        status,
        objective,
        values,
    })
}

/// Writes `result` in the "name value" convention understood by
/// [`parse_solution`].
pub fn write_solution(model: &Model, result: &SolveResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Objective value = {}", result.objective);
    for (v, x) in model.variables.iter().zip(&result.values) {
        let _ = writeln!(out, "{} {x}", v.name);
    }
    out
}

/// External solver driven by a command template such as
/// `cbc {mps} solve solu {sol}`.
#[derive(Debug, Clone)]
pub struct ExternalSolver {
    pub template: String,
    /// Keep the MPS and solution files in this directory instead of a
    /// temporary one.
    pub keep_artifacts: Option<PathBuf>,
}

impl ExternalSolver {
    pub fn new(template: impl Into<String>) -> Self {
        Self {
            template: template.into(),
            keep_artifacts: None,
        }
    }

    /// Reads the template from [`SOLVER_CMD_ENV`].
    pub fn from_env() -> Option<Self> {
        std::env::var(SOLVER_CMD_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .map(Self::new)
    }

    fn run(&self, model: &Model, dir: &Path) -> Result<SolveResult, SolverError> {
        let start = Instant::now();
        let mps = dir.join("model.mps");
        let sol = dir.join("model.sol");
        std::fs::write(&mps, write_mps(model)?)?;
        let _ = std::fs::remove_file(&sol);
        let words: Vec<String> = self
            .template
            .split_whitespace()
            .map(|w| {
                w.replace("{mps}", &mps.to_string_lossy())
                    .replace("{sol}", &sol.to_string_lossy())
            })
            .collect();
        let Some((program, args)) = words.split_first() else {
            return Err(SolverError::EmptyCommand);
        };
        let output = Command::new(program)
            .args(args)
            .output()
            .map_err(|source| SolverError::Spawn {
                command: program.clone(),
                env: SOLVER_CMD_ENV,
                source,
            })?;
        if !output.status.success() {
            return Err(SolverError::ExitStatus {
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        let text = std::fs::read_to_string(&sol).map_err(|e| SolverError::Parse {
            path: sol.clone(),
            message: e.to_string(),
        })?;
        let parsed = parse_solution(&text).map_err(|message| SolverError::Parse {
            path: sol.clone(),
            message,
        })?;
        let stats = SolveStats {
            wall_time: start.elapsed(),
            ..SolveStats::default()
        };
        let worst = match model.objective.sense {
            ObjSense::Minimize => f64::INFINITY,
            ObjSense::Maximize => f64::NEG_INFINITY,
        };
        if matches!(parsed.status, Status::Infeasible | Status::Unbounded) {
            let v = if parsed.status == Status::Infeasible {
                worst
            } else {
                -worst
            };
            return Ok(SolveResult {
                status: parsed.status,
                objective: v,
                values: Vec::new(),
                bound: v,
                stats,
            });
        }
        let values: Vec<f64> = model
            .variables
            .iter()
            .map(|v| parsed.values.get(&v.name).copied().unwrap_or(0.0))
            .collect();
        let eval = model.evaluate_with_tol(&values, 1e-5)?;
        if let Some(v) = eval.violated.first() {
            return Err(SolverError::Verification(format!(
                "`{}` violated by {:.3e}",
                v.name, v.amount
            )));
        }
        if let Some(v) = model.integrality_violations(&values, 1e-5).first() {
            return Err(SolverError::Verification(format!(
                "`{}` is fractional ({:.3e} from integral)",
                v.name, v.amount
            )));
        }
        let status = parsed.status;
        Ok(SolveResult {
            status,
            objective: eval.objective,
            values,
            bound: if status == Status::Optimal {
                eval.objective
            } else {
                -worst
            },
            stats,
        })
    }
}

impl Backend for ExternalSolver {
    fn solve(&self, model: &Model, relax: bool) -> Result<SolveResult, SolverError> {
        let relaxed;
        let model = if relax {
            relaxed = model.relaxed();
            &relaxed
        } else {
            model
        };
        match &self.keep_artifacts {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                self.run(model, dir)
            }
            None => {
                let dir = tempfile::tempdir()?;
                self.run(model, dir.path())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn name_value_format() {
        let p = parse_solution("# Objective value = 2\nx1 1\nx2 1.0\n\n").unwrap();
        assert_eq!(p.objective, Some(2.0));
        assert_eq!(p.values["x2"], 1.0);
        assert!(parse_solution("x1 1 2\n").is_err());
        assert!(parse_solution("").is_err());
    }

    #[test]
    fn cbc_format() {
        let text = "Optimal - objective value 1.00000000\n      0 x1                     1                       0\n      1 x2                     0                       0\n";
        let p = parse_solution(text).unwrap();
        assert_eq!(p.status, Status::Optimal);
        assert_eq!(p.objective, Some(1.0));
        assert_eq!(p.values["x1"], 1.0);
        let p = parse_solution("Infeasible - objective value 0.00000000\n").unwrap();
        assert_eq!(p.status, Status::Infeasible);
    }

    #[test]
    fn missing_binary_is_a_spawn_error() {
        let m = Model::new("m");
        let err = ExternalSolver::new("definitely-not-a-solver-xyz {mps} {sol}")
            .solve(&m, false)
            .unwrap_err();
        assert!(matches!(err, SolverError::Spawn { .. }));
        assert!(err.to_string().contains(SOLVER_CMD_ENV));
    }

    #[test]
    fn empty_template() {
        let err = ExternalSolver::new("  ").solve(&Model::new("m"), false).unwrap_err();
        assert!(matches!(err, SolverError::EmptyCommand));
    }
}
