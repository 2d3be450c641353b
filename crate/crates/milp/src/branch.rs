//! Best-first branch-and-bound over the embedded simplex.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::error::SolverError;
use crate::model::{Model, ObjSense};
use crate::simplex::{check_vertex, finish_lp, LpProblem};
use crate::{SolveResult, SolveStats, Status};

#[derive(Debug, Clone, PartialEq)]
pub struct MipOptions {
    pub node_limit: u64,
    pub time_limit: Option<Duration>,
    /// A value within this distance of an integer counts as integral.
    pub integrality_tol: f64,
    /// Nodes whose bound does not beat the incumbent by more than this are
    /// pruned.
    pub absolute_gap: f64,
    /// Refuse models with more integer variables than this.
    pub max_integer_vars: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self {
            node_limit: 1_000_000,
            time_limit: None,
            integrality_tol: 1e-6,
            absolute_gap: 1e-6,
            max_integer_vars: 5000,
        }
    }
}

struct Node {
    /// Parent LP value in minimization form.
    bound: f64,
    seq: u64,
    /// Bound changes relative to the root, as (var, lower, upper).
    changes: Vec<(usize, f64, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then most recent node
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(self.seq.cmp(&other.seq))
    }
}

/// Solves `model` to optimality (within `options.absolute_gap`) or until a
/// limit is hit.
pub fn solve_mip(model: &Model, options: &MipOptions) -> Result<SolveResult, SolverError> {
    let start = Instant::now();
    let deadline = options.time_limit.map(|d| start + d);
    let nint = model.num_integer_vars();
    if nint > options.max_integer_vars {
        return Err(SolverError::TooLarge(format!(
            "{nint} integer variables (limit {})",
            options.max_integer_vars
        )));
    }
    let p = LpProblem::new(model)?;
    let sign = match model.objective.sense {
        ObjSense::Minimize => 1.0,
        ObjSense::Maximize => -1.0,
    };
    let root_lo: Vec<f64> = model
        .variables
        .iter()
        .map(|v| if v.kind.is_integral() { v.lower.ceil() } else { v.lower })
        .collect();
    let root_up: Vec<f64> = model
        .variables
        .iter()
        .map(|v| if v.kind.is_integral() { v.upper.floor() } else { v.upper })
        .collect();
    let integral: Vec<usize> = (0..model.num_vars())
        .filter(|&j| model.variables[j].kind.is_integral())
        .collect();

    let mut stats = SolveStats::default();
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        changes: Vec::new(),
    });
    let mut limited = false;
    let (mut lo, mut up) = (root_lo.clone(), root_up.clone());

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= best - options.absolute_gap {
                continue;
            }
        }
        if stats.nodes >= options.node_limit || deadline.is_some_and(|d| Instant::now() >= d) {
            heap.push(node);
            limited = true;
            break;
        }
        stats.nodes += 1;
        lo.copy_from_slice(&root_lo);
        up.copy_from_slice(&root_up);
        for &(j, l, u) in &node.changes {
            lo[j] = l;
            up[j] = u;
        }
        let out = p.solve(&lo, &up, deadline)?;
        stats.iterations += out.iterations;
        match out.status {
            Status::Infeasible => continue,
            Status::Limit => {
                heap.push(node);
                limited = true;
                break;
            }
            Status::Unbounded => {
                if stats.nodes == 1 {
                    stats.wall_time = start.elapsed();
                    return finish_lp(model, out, stats);
                }
                return Err(SolverError::Numerical("unbounded LP below a bounded root".into()));
            }
            Status::Optimal => {}
        }
        let value = sign * out.objective;
        if let Some((best, _)) = &incumbent {
            if value >= best - options.absolute_gap {
                continue;
            }
        }
        // most fractional, ties to the lowest index
        let mut branch: Option<(usize, f64)> = None;
        for &j in &integral {
            let f = out.x[j] - out.x[j].floor();
            let dist = f.min(1.0 - f);
            if dist > options.integrality_tol && branch.is_none_or(|(_, d)| dist > d + 1e-12) {
                branch = Some((j, dist));
            }
        }
        match branch {
            None => {
                let mut x = out.x;
                for &j in &integral {
                    x[j] = x[j].round();
                }
                let value = sign * p.objective(&x);
                if incumbent.as_ref().is_none_or(|(b, _)| value < *b) {
                    incumbent = Some((value, x));
                }
            }
            Some((j, _)) => {
                let v = out.x[j];
                for (l, u) in [(lo[j], v.floor()), (v.ceil(), up[j])] {
                    seq += 1;
                    let mut changes = node.changes.clone();
                    changes.retain(|c| c.0 != j);
                    changes.push((j, l, u));
                    heap.push(Node {
                        bound: value,
                        seq,
                        changes,
                    });
                }
            }
        }
    }
    stats.wall_time = start.elapsed();

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((value, x)) => {
            check_vertex(model, &x)?;
            let bound = if limited { open_bound.min(value) } else { value };
            Ok(SolveResult {
                status: if limited { Status::Limit } else { Status::Optimal },
                objective: sign * value,
                values: x,
                bound: sign * bound,
                stats,
            })
        }
        None => Ok(SolveResult {
            status: if limited { Status::Limit } else { Status::Infeasible },
            objective: sign * f64::INFINITY,
            values: Vec::new(),
            bound: sign * if limited { open_bound } else { f64::INFINITY },
            stats,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RowSense, VarKind};

    #[test]
    fn infeasible_toy() {
        let mut m = Model::new("t");
        let x = m.add_binary("x").unwrap();
        m.add_constraint("a", [(x, 1.0)], RowSense::Ge, 1.0).unwrap();
        m.add_constraint("b", [(x, 1.0)], RowSense::Le, 0.0).unwrap();
        let r = solve_mip(&m, &MipOptions::default()).unwrap();
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn knapsack() {
        // best pick is items 0 and 1: weight 7, value 23
        let vals = [10.0, 13.0, 7.0, 8.0];
        let wts = [3.0, 4.0, 2.0, 3.0];
        let mut m = Model::new("k");
        let xs: Vec<usize> = (0..4).map(|i| m.add_binary(format!("x{i}")).unwrap()).collect();
        m.add_constraint("cap", xs.iter().zip(wts).map(|(&x, w)| (x, w)), RowSense::Le, 7.0)
            .unwrap();
        m.set_objective(ObjSense::Maximize, xs.iter().zip(vals).map(|(&x, v)| (x, v)), 0.0);
        let r = solve_mip(&m, &MipOptions::default()).unwrap();
        assert_eq!(r.status, Status::Optimal);
        assert!((r.objective - 23.0).abs() < 1e-9);
        assert!((r.bound - r.objective).abs() < 1e-6);
        assert!(r.stats.nodes >= 1);
    }

    #[test]
    fn general_integers() {
        // max x + y, 2x + 2y <= 7, x, y integer in [0, 10] -> 3
        let mut m = Model::new("g");
        let x = m.add_var("x", VarKind::Integer, 0.0, 10.0).unwrap();
        let y = m.add_var("y", VarKind::Integer, 0.0, 10.0).unwrap();
        m.add_constraint("a", [(x, 2.0), (y, 2.0)], RowSense::Le, 7.0).unwrap();
        m.set_objective(ObjSense::Maximize, [(x, 1.0), (y, 1.0)], 0.0);
        let r = solve_mip(&m, &MipOptions::default()).unwrap();
        assert!((r.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn node_limit_reports_limit() {
        let mut m = Model::new("g");
        let xs: Vec<usize> = (0..6).map(|i| m.add_binary(format!("x{i}")).unwrap()).collect();
        m.add_constraint("a", xs.iter().map(|&x| (x, 2.0)), RowSense::Le, 7.0)
            .unwrap();
        m.set_objective(ObjSense::Maximize, xs.iter().map(|&x| (x, 1.0)), 0.0);
        let opts = MipOptions {
            node_limit: 1,
            ..MipOptions::default()
        };
        let r = solve_mip(&m, &opts).unwrap();
        assert_eq!(r.status, Status::Limit);
        assert!(r.bound >= 3.0 - 1e-9);
    }
}
