//! Dense bounded-variable primal simplex.
//!
//! Every row gets a slack so that `A x + s = b`; the slack bounds encode the
//! row sense. Rows whose slack cannot start basic receive an artificial
//! column and phase 1 drives the artificials to zero. The basis inverse is
//! kept explicitly (column-major) and refactorized by Gauss-Jordan
//! elimination at phase ends and periodically.

use std::time::Instant;

use crate::error::SolverError;
use crate::model::{Model, ObjSense, RowSense};
use crate::{SolveResult, SolveStats, Status};

/// Largest model the embedded LP path accepts (variables and rows each).
pub const MAX_EMBEDDED_DIM: usize = 5000;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const DEGENERATE_SWITCH: u32 = 50;

/// A model in solver form, shared across the many LPs of a branch-and-bound.
#[derive(Debug, Clone)]
pub(crate) struct LpProblem {
    pub(crate) m: usize,
    pub(crate) n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    /// Minimization costs of the structural columns.
    cost: Vec<f64>,
    obj: Vec<f64>,
    constant: f64,
    rhs: Vec<f64>,
    slack_lo: Vec<f64>,
    slack_up: Vec<f64>,
    dual_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LpOutcome {
    pub(crate) status: Status,
    /// Structural values; meaningful for `Optimal` (and the last iterate
    /// otherwise).
    pub(crate) x: Vec<f64>,
    /// Objective in the model's own sense, constant included.
    pub(crate) objective: f64,
    pub(crate) iterations: u64,
}

impl LpProblem {
    pub(crate) fn new(model: &Model) -> Result<Self, SolverError> {
        model.validate()?;
        let (m, n) = (model.num_constraints(), model.num_vars());
        if n > MAX_EMBEDDED_DIM || m > MAX_EMBEDDED_DIM {
            return Err(SolverError::TooLarge(format!(
                "{n} variables and {m} rows (limit {MAX_EMBEDDED_DIM} each)"
            )));
        }
        let mut cols = vec![Vec::new(); n];
        for (i, c) in model.constraints.iter().enumerate() {
            for &(j, a) in &c.terms {
                cols[j].push((i, a));
            }
        }
        let sign = match model.objective.sense {
            ObjSense::Minimize => 1.0,
            ObjSense::Maximize => -1.0,
        };
        let mut obj = vec![0.0; n];
        for &(j, c) in &model.objective.terms {
            obj[j] += c;
        }
        let cost: Vec<f64> = obj.iter().map(|c| sign * c).collect();
        let cmax = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let (mut slack_lo, mut slack_up) = (Vec::with_capacity(m), Vec::with_capacity(m));
        for c in &model.constraints {
            let (lo, up) = match c.sense {
                RowSense::Le => (0.0, f64::INFINITY),
                RowSense::Ge => (f64::NEG_INFINITY, 0.0),
                RowSense::Eq => (0.0, 0.0),
            };
            slack_lo.push(lo);
            slack_up.push(up);
        }
        Ok(Self {
            m,
            n,
            cols,
            cost,
            obj,
            constant: model.objective.constant,
            rhs: model.constraints.iter().map(|c| c.rhs).collect(),
            slack_lo,
            slack_up,
            dual_tol: 1e-9 * cmax,
        })
    }

    pub(crate) fn objective(&self, x: &[f64]) -> f64 {
        self.constant + self.obj.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Solves the LP with structural bounds `lower`/`upper`.
    pub(crate) fn solve(
        &self,
        lower: &[f64],
        upper: &[f64],
        deadline: Option<Instant>,
    ) -> Result<LpOutcome, SolverError> {
        if lower.iter().zip(upper).any(|(l, u)| l > u) {
            return Ok(LpOutcome {
                status: Status::Infeasible,
                x: lower.to_vec(),
                objective: f64::NAN,
                iterations: 0,
            });
        }
        let mut w = Work::new(self, lower, upper);
        let cap = 50_000u64.max(20 * (self.m + self.n) as u64);

        if !w.art.is_empty() {
            let mut c1 = vec![0.0; w.ncols];
            for c in c1.iter_mut().skip(self.n + self.m) {
                *c = 1.0;
            }
            match w.optimize(&c1, 0.0, deadline, cap)? {
                End::Optimal => {}
                End::Limit => return Ok(w.outcome(Status::Limit)),
                End::Unbounded => return Err(SolverError::Numerical("phase 1 reported unbounded".into())),
            }
            let infeas: f64 = (self.n + self.m..w.ncols).map(|j| w.x[j]).sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeas > 1e-7 * scale {
                return Ok(w.outcome(Status::Infeasible));
            }
            w.drive_out_artificials()?;
        }
        let mut c2 = vec![0.0; w.ncols];
        c2[..self.n].copy_from_slice(&self.cost);
        let end = w.optimize(&c2, self.dual_tol, deadline, cap)?;
        Ok(w.outcome(match end {
            End::Optimal => Status::Optimal,
            End::Unbounded => Status::Unbounded,
            End::Limit => Status::Limit,
        }))
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum State {
    Basic,
    Lower,
    Upper,
    Zero,
}

enum End {
    Optimal,
    Unbounded,
    Limit,
}

struct Work<'a> {
    p: &'a LpProblem,
    m: usize,
    ncols: usize,
    lo: Vec<f64>,
    up: Vec<f64>,
    /// Artificial columns as (row, sign), indexed from `n + m`.
    art: Vec<(usize, f64)>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    /// Basis inverse, column-major: entry (r, k) at `k * m + r`.
    binv: Vec<f64>,
    iterations: u64,
    since_refactor: usize,
}

impl<'a> Work<'a> {
    fn new(p: &'a LpProblem, lower: &[f64], upper: &[f64]) -> Self {
        let (m, n) = (p.m, p.n);
        let mut lo = lower.to_vec();
        let mut up = upper.to_vec();
        lo.extend_from_slice(&p.slack_lo);
        up.extend_from_slice(&p.slack_up);
        let mut x = vec![0.0; n + m];
        let mut state = vec![State::Basic; n + m];
        for j in 0..n {
            (x[j], state[j]) = if lo[j].is_finite() {
                (lo[j], State::Lower)
            } else if up[j].is_finite() {
                (up[j], State::Upper)
            } else {
                (0.0, State::Zero)
            };
        }
        let mut resid = p.rhs.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for &(i, a) in &p.cols[j] {
                    resid[i] -= a * x[j];
                }
            }
        }
        let mut art = Vec::new();
        let mut basis = vec![0; m];
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            let s = n + i;
            let r = resid[i];
            let clamped = r.clamp(lo[s], up[s]);
            if (r - clamped).abs() <= FEAS_TOL * (1.0 + r.abs()) {
                x[s] = r;
                state[s] = State::Basic;
                basis[i] = s;
                binv[i * m + i] = 1.0;
            } else {
                x[s] = clamped;
                state[s] = if clamped == lo[s] { State::Lower } else { State::Upper };
                let sign = (r - clamped).signum();
                let a = n + m + art.len();
                art.push((i, sign));
                x.push((r - clamped).abs());
                state.push(State::Basic);
                lo.push(0.0);
                up.push(f64::INFINITY);
                basis[i] = a;
                binv[i * m + i] = sign;
            }
        }
        let ncols = x.len();
        Self {
            p,
            m,
            ncols,
            lo,
            up,
            art,
            x,
            state,
            basis,
            binv,
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        let (n, m) = (self.p.n, self.m);
        if j < n {
            for &(i, a) in &self.p.cols[j] {
                f(i, a);
            }
        } else if j < n + m {
            f(j - n, 1.0);
        } else {
            let (i, s) = self.art[j - n - m];
            f(i, s);
        }
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        self.for_col(j, |k, a| {
            let col = &self.binv[k * m..(k + 1) * m];
            for (r, b) in alpha.iter_mut().zip(col) {
                *r += a * b;
            }
        });
        alpha
    }

    fn outcome(&self, status: Status) -> LpOutcome {
        let x = self.x[..self.p.n].to_vec();
        let objective = match status {
            Status::Unbounded => f64::NAN,
            _ => self.p.objective(&x),
        };
        LpOutcome {
            status,
            x,
            objective,
            iterations: self.iterations,
        }
    }

    fn refactor(&mut self) -> Result<(), SolverError> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        // augmented [B | I], row-major, width 2m
        let w = 2 * m;
        let mut a = vec![0.0; m * w];
        for (c, &j) in self.basis.iter().enumerate() {
            self.for_col(j, |i, v| a[i * w + c] += v);
        }
        for i in 0..m {
            a[i * w + m + i] = 1.0;
        }
        for c in 0..m {
            let (mut best, mut piv) = (0.0, c);
            for r in c..m {
                let v = a[r * w + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-11 {
                return Err(SolverError::Numerical(format!(
                    "singular basis at refactorization (column {c})"
                )));
            }
            if piv != c {
                for k in 0..w {
                    a.swap(c * w + k, piv * w + k);
                }
            }
            let inv = 1.0 / a[c * w + c];
            for k in 0..w {
                a[c * w + k] *= inv;
            }
            let (head, tail) = a.split_at_mut(c * w);
            let (prow, rest) = tail.split_at_mut(w);
            for row in head.chunks_mut(w).chain(rest.chunks_mut(w)) {
                let f = row[c];
                if f != 0.0 {
                    for (x, p) in row.iter_mut().zip(prow.iter()) {
                        *x -= f * p;
                    }
                }
            }
        }
        for r in 0..m {
            for k in 0..m {
                self.binv[k * m + r] = a[r * w + m + k];
            }
        }
        self.recompute_basics();
        Ok(())
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut resid = self.p.rhs.clone();
        for j in 0..self.ncols {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let v = self.x[j];
                self.for_col(j, |i, a| resid[i] -= a * v);
            }
        }
        for r in 0..m {
            let mut s = 0.0;
            for (k, &b) in resid.iter().enumerate() {
                s += self.binv[k * m + r] * b;
            }
            self.x[self.basis[r]] = s;
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let ar = alpha[r];
        for k in 0..m {
            let col = &mut self.binv[k * m..(k + 1) * m];
            let v = col[r] / ar;
            if v != 0.0 {
                for (c, a) in col.iter_mut().zip(alpha) {
                    *c -= a * v;
                }
            }
            col[r] = v;
        }
        self.basis[r] = q;
        self.state[q] = State::Basic;
        self.since_refactor += 1;
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
        (0..m)
            .map(|k| self.binv[k * m..(k + 1) * m].iter().zip(&cb).map(|(b, c)| b * c).sum())
            .collect()
    }

    fn optimize(
        &mut self,
        cost: &[f64],
        dual_tol: f64,
        deadline: Option<Instant>,
        cap: u64,
    ) -> Result<End, SolverError> {
        let dtol = dual_tol.max(1e-9);
        let interval = 500.max(self.m);
        let mut degenerate = 0u32;
        let mut verified = false;
        loop {
            if self.iterations >= cap {
                return Err(SolverError::IterationCap(self.iterations));
            }
            if self.iterations.is_multiple_of(64) {
                if let Some(d) = deadline {
                    if Instant::now() >= d {
                        return Ok(End::Limit);
                    }
                }
            }
            if self.since_refactor >= interval {
                self.refactor()?;
            }
            let y = self.duals(cost);
            let bland = degenerate >= DEGENERATE_SWITCH;
            let mut enter: Option<(usize, f64, f64)> = None;
            for j in 0..self.ncols {
                let st = self.state[j];
                if st == State::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let mut d = cost[j];
                self.for_col(j, |i, a| d -= y[i] * a);
                let dir = match st {
                    State::Lower if d < -dtol => 1.0,
                    State::Upper if d > dtol => -1.0,
                    State::Zero if d.abs() > dtol => -d.signum(),
                    _ => continue,
                };
                if bland {
                    enter = Some((j, dir, d));
                    break;
                }
                if enter.is_none_or(|(_, _, best)| d.abs() > best.abs()) {
                    enter = Some((j, dir, d));
                }
            }
            let Some((q, dir, _)) = enter else {
                if verified {
                    return Ok(End::Optimal);
                }
                // confirm on a fresh factorization before declaring optimality
                self.refactor()?;
                verified = true;
                continue;
            };
            verified = false;
            let alpha = self.ftran(q);

            let leave = self.ratio_test(&alpha, dir, bland);
            let flip = self.up[q] - self.lo[q];
            let (t, leave) = match leave {
                Some((r, t)) if t < flip => (t, Some(r)),
                _ if flip.is_finite() => (flip, None),
                Some((r, t)) => (t, Some(r)),
                None => return Ok(End::Unbounded),
            };

            self.iterations += 1;
            if t <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.x[q] += dir * t;
            for (r, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    self.x[self.basis[r]] -= dir * t * a;
                }
            }
            match leave {
                None => {
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                    self.x[q] = if dir > 0.0 { self.up[q] } else { self.lo[q] };
                }
                Some(r) => {
                    let out = self.basis[r];
                    let delta = -dir * alpha[r];
                    if delta < 0.0 {
                        self.x[out] = self.lo[out];
                        self.state[out] = State::Lower;
                    } else {
                        self.x[out] = self.up[out];
                        self.state[out] = State::Upper;
                    }
                    self.pivot(r, q, &alpha);
                }
            }
        }
    }

    /// Returns the leaving position and step length, if any basic variable
    /// blocks the move.
    fn ratio_test(&self, alpha: &[f64], dir: f64, bland: bool) -> Option<(usize, f64)> {
        let limit = |r: usize, tol: f64| -> Option<f64> {
            let a = alpha[r];
            if a.abs() <= PIVOT_TOL {
                return None;
            }
            let j = self.basis[r];
            let delta = -dir * a;
            if delta < 0.0 && self.lo[j].is_finite() {
                Some((self.x[j] - self.lo[j] + tol) / -delta)
            } else if delta > 0.0 && self.up[j].is_finite() {
                Some((self.up[j] - self.x[j] + tol) / delta)
            } else {
                None
            }
        };
        if bland {
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.m {
                if let Some(t) = limit(r, 0.0) {
                    let t = t.max(0.0);
                    let better = match best {
                        None => true,
                        Some((b, bt)) => t < bt - 1e-12 || (t <= bt + 1e-12 && self.basis[r] < self.basis[b]),
                    };
                    if better {
                        best = Some((r, t));
                    }
                }
            }
            return best;
        }
        // Harris two-pass: bound the step with relaxed bounds, then pick the
        // largest pivot among the rows that block within that step.
        let mut tmax = f64::INFINITY;
        for r in 0..self.m {
            if let Some(t) = limit(r, FEAS_TOL) {
                tmax = tmax.min(t);
            }
        }
        if tmax == f64::INFINITY {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.m {
            if let Some(t) = limit(r, 0.0) {
                if t <= tmax && best.is_none_or(|(b, _)| alpha[r].abs() > alpha[b].abs()) {
                    best = Some((r, t.max(0.0)));
                }
            }
        }
        best
    }

    /// After phase 1, replaces basic artificials by real columns where
    /// possible and fixes every artificial at zero.
    fn drive_out_artificials(&mut self) -> Result<(), SolverError> {
        let (n, m) = (self.p.n, self.m);
        let first_art = n + m;
        for r in 0..m {
            if self.basis[r] < first_art {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..first_art {
                if self.state[j] == State::Basic {
                    continue;
                }
                let mut v = 0.0;
                self.for_col(j, |k, a| v += self.binv[k * m + r] * a);
                if v.abs() > 1e-7 && best.is_none_or(|(_, b)| v.abs() > b.abs()) {
                    best = Some((j, v));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(q);
                let out = self.basis[r];
                self.x[out] = 0.0;
                self.state[out] = State::Lower;
                self.pivot(r, q, &alpha);
            }
        }
        for j in first_art..self.ncols {
            self.up[j] = 0.0;
            if self.state[j] != State::Basic {
                self.x[j] = 0.0;
                self.state[j] = State::Lower;
            }
        }
        self.refactor()
    }
}

/// Solves the LP relaxation of `model` (integrality ignored) and returns a
/// basic optimal solution.
pub fn solve_lp(model: &Model) -> Result<SolveResult, SolverError> {
    let start = Instant::now();
    let p = LpProblem::new(model)?;
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    let out = p.solve(&lower, &upper, None)?;
    let stats = SolveStats {
        iterations: out.iterations,
        nodes: 0,
        wall_time: start.elapsed(),
    };
    finish_lp(model, out, stats)
}

pub(crate) fn finish_lp(model: &Model, out: LpOutcome, stats: SolveStats) -> Result<SolveResult, SolverError> {
    let unbounded_value = match model.objective.sense {
        ObjSense::Minimize => f64::NEG_INFINITY,
        ObjSense::Maximize => f64::INFINITY,
    };
    let infeasible_value = -unbounded_value;
    if out.status == Status::Optimal {
        check_vertex(model, &out.x)?;
    }
    let (objective, bound) = match out.status {
        Status::Optimal => (out.objective, out.objective),
        Status::Unbounded => (unbounded_value, unbounded_value),
        Status::Infeasible => (infeasible_value, infeasible_value),
        Status::Limit => (out.objective, unbounded_value),
    };
    Ok(SolveResult {
        status: out.status,
        objective,
        values: out.x,
        bound,
        stats,
    })
}

pub(crate) fn check_vertex(model: &Model, x: &[f64]) -> Result<(), SolverError> {
    let eval = model.evaluate_with_tol(x, 1e-5)?;
    if let Some(v) = eval.violated.first() {
        return Err(SolverError::Numerical(format!(
            "solution violates `{}` by {:.3e}",
            v.name, v.amount
        )));
    }
    Ok(())
}
