use std::collections::{BTreeMap, HashMap};

use crate::error::ModelError;

/// Default absolute tolerance used by [`Model::evaluate`].
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Amount by which `values` violates the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            RowSense::Le => (lhs - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - lhs).max(0.0),
            RowSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub sense: ObjSense,
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            sense: ObjSense::Minimize,
            terms: Vec::new(),
            constant: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Row,
    Bound,
    Integrality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Constraint name for rows, variable name for bounds and integrality.
    pub name: String,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub violated: Vec<Violation>,
}

impl Evaluation {
    pub fn is_feasible(&self) -> bool {
        self.violated.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &Violation> {
        self.violated.iter().filter(|v| v.kind == ViolationKind::Row)
    }
}

/// A mixed-integer linear program.
///
/// Variables and constraints keep declaration order, which is also the order
/// used by every writer. `tags` maps semantic roles such as `x:3` or `r:5` to
/// variable indices so that builders can share blocks of variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Model {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Objective,
    pub tags: BTreeMap<String, Vec<usize>>,
    var_names: HashMap<String, usize>,
    row_names: HashMap<String, usize>,
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integer_vars(&self) -> usize {
        self.variables.iter().filter(|v| v.kind.is_integral()).count()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Result<usize, ModelError> {
        let name = name.into();
        check_name(&name)?;
        if self.var_names.contains_key(&name) {
            return Err(ModelError::DuplicateVariable(name));
        }
        if lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(ModelError::EmptyDomain { name, lower, upper });
        }
        if kind == VarKind::Binary && (lower < 0.0 || upper > 1.0) {
            return Err(ModelError::BinaryBounds(name));
        }
        let index = self.variables.len();
        self.var_names.insert(name.clone(), index);
        self.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        Ok(index)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Result<usize, ModelError> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<usize, ModelError> {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    /// Adds a row. Terms on the same variable are merged and zero
    /// coefficients dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (usize, f64)>,
        sense: RowSense,
        rhs: f64,
    ) -> Result<usize, ModelError> {
        let name = name.into();
        check_name(&name)?;
        if self.row_names.contains_key(&name) {
            return Err(ModelError::DuplicateConstraint(name));
        }
        let terms = merge_terms(terms);
        if let Some(&(index, _)) = terms.iter().find(|(j, _)| *j >= self.variables.len()) {
            return Err(ModelError::UnknownVariable {
                constraint: name,
                index,
            });
        }
        let index = self.constraints.len();
        self.row_names.insert(name.clone(), index);
        self.constraints.push(Constraint {
            name,
            terms,
            sense,
            rhs,
        });
        Ok(index)
    }

    pub fn set_objective(&mut self, sense: ObjSense, terms: impl IntoIterator<Item = (usize, f64)>, constant: f64) {
        self.objective = Objective {
            sense,
            terms: merge_terms(terms),
            constant,
        };
    }

    /// Adds `coef` to the objective coefficient of `var`.
    pub fn add_objective_term(&mut self, var: usize, coef: f64) {
        if let Some(t) = self.objective.terms.iter_mut().find(|(j, _)| *j == var) {
            t.1 += coef;
        } else if coef != 0.0 {
            self.objective.terms.push((var, coef));
        }
    }

    pub fn tag(&mut self, role: impl Into<String>, var: usize) {
        self.tags.entry(role.into()).or_default().push(var);
    }

    pub fn tagged(&self, role: &str) -> Option<&[usize]> {
        self.tags.get(role).map(Vec::as_slice)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.get(name).copied()
    }

    pub fn constraint_index(&self, name: &str) -> Option<usize> {
        self.row_names.get(name).copied()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        let v = &mut self.variables[var];
        v.lower = lower;
        v.upper = upper;
    }

    /// Structural checks: unique names (enforced on insertion), valid indices
    /// and sane bounds.
    pub fn validate(&self) -> Result<(), ModelError> {
        for v in &self.variables {
            if v.lower > v.upper {
                return Err(ModelError::EmptyDomain {
                    name: v.name.clone(),
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(ModelError::BinaryBounds(v.name.clone()));
            }
        }
        for c in &self.constraints {
            if let Some(&(index, _)) = c.terms.iter().find(|(j, _)| *j >= self.variables.len()) {
                return Err(ModelError::UnknownVariable {
                    constraint: c.name.clone(),
                    index,
                });
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.constant + self.objective.terms.iter().map(|&(j, c)| c * values[j]).sum::<f64>()
    }

    /// Objective value plus every row and bound violated by more than `tol`.
    /// Integrality is not checked; see [`Model::integrality_violations`].
    pub fn evaluate_with_tol(&self, values: &[f64], tol: f64) -> Result<Evaluation, ModelError> {
        if values.len() != self.variables.len() {
            return Err(ModelError::AssignmentLength {
                expected: self.variables.len(),
                got: values.len(),
            });
        }
        let mut violated = Vec::new();
        for (v, &x) in self.variables.iter().zip(values) {
            let amount = (v.lower - x).max(x - v.upper).max(0.0);
            if amount > tol {
                violated.push(Violation {
                    kind: ViolationKind::Bound,
                    name: v.name.clone(),
                    amount,
                });
            }
        }
        for c in &self.constraints {
            let amount = c.violation(values);
            if amount > tol {
                violated.push(Violation {
                    kind: ViolationKind::Row,
                    name: c.name.clone(),
                    amount,
                });
            }
        }
        Ok(Evaluation {
            objective: self.objective_value(values),
            violated,
        })
    }

    pub fn evaluate(&self, values: &[f64]) -> Result<Evaluation, ModelError> {
        self.evaluate_with_tol(values, FEASIBILITY_TOL)
    }

    /// Evaluates a name-keyed assignment; every variable must be present.
    pub fn evaluate_named(&self, assignment: &HashMap<String, f64>) -> Result<Evaluation, ModelError> {
        let values = self
            .variables
            .iter()
            .map(|v| {
                assignment
                    .get(&v.name)
                    .copied()
                    .ok_or_else(|| ModelError::MissingValue(v.name.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.evaluate(&values)
    }

    pub fn integrality_violations(&self, values: &[f64], tol: f64) -> Vec<Violation> {
        self.variables
            .iter()
            .zip(values)
            .filter(|(v, _)| v.kind.is_integral())
            .filter_map(|(v, &x)| {
                let amount = (x - x.round()).abs();
                (amount > tol).then(|| Violation {
                    kind: ViolationKind::Integrality,
                    name: v.name.clone(),
                    amount,
                })
            })
            .collect()
    }

    /// Copy of the model with every integer and binary variable made
    /// continuous (bounds kept).
    pub fn relaxed(&self) -> Model {
        let mut m = self.clone();
        for v in &mut m.variables {
            v.kind = VarKind::Continuous;
        }
        m
    }
}

fn check_name(name: &str) -> Result<(), ModelError> {
    if name.len() > 255 {
        return Err(ModelError::NameTooLong(name.chars().take(32).collect()));
    }
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(ModelError::NameWhitespace(name.to_string()));
    }
    Ok(())
}

fn merge_terms(terms: impl IntoIterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (j, a) in terms {
        match out.iter_mut().find(|(k, _)| *k == j) {
            Some(t) => t.1 += a,
            None => out.push((j, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Model {
        let mut m = Model::new("toy");
        let x1 = m.add_binary("x1").unwrap();
        let x2 = m.add_binary("x2").unwrap();
        m.add_constraint("c1", [(x1, 1.0), (x2, 1.0)], RowSense::Le, 1.0)
            .unwrap();
        m.set_objective(ObjSense::Maximize, [(x1, 1.0), (x2, 1.0)], 0.0);
        m
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut m = toy();
        assert_eq!(m.add_binary("x1"), Err(ModelError::DuplicateVariable("x1".into())));
        assert!(matches!(
            m.add_constraint("c1", [], RowSense::Le, 0.0),
            Err(ModelError::DuplicateConstraint(_))
        ));
    }

    #[test]
    fn unknown_index_rejected() {
        let mut m = toy();
        let err = m.add_constraint("bad", [(7, 1.0)], RowSense::Le, 0.0);
        assert!(matches!(err, Err(ModelError::UnknownVariable { index: 7, .. })));
    }

    #[test]
    fn long_names_rejected() {
        let mut m = Model::new("m");
        let long = "v".repeat(256);
        assert!(matches!(m.add_binary(long), Err(ModelError::NameTooLong(_))));
    }

    #[test]
    fn evaluate_reports_violations() {
        let m = toy();
        let ok = m.evaluate(&[1.0, 0.0]).unwrap();
        assert!(ok.is_feasible());
        assert_eq!(ok.objective, 1.0);
        let bad = m.evaluate(&[1.0, 1.0]).unwrap();
        assert_eq!(bad.violated.len(), 1);
        assert_eq!(bad.violated[0].name, "c1");
        assert!((bad.violated[0].amount - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evaluate_named_requires_every_variable() {
        let m = toy();
        let mut a = HashMap::new();
        a.insert("x1".to_string(), 0.0);
        assert_eq!(m.evaluate_named(&a), Err(ModelError::MissingValue("x2".into())));
    }

    #[test]
    fn merged_terms() {
        let mut m = toy();
        let r = m
            .add_constraint("dup", [(0, 1.0), (0, 2.0), (1, 1.0), (1, -1.0)], RowSense::Ge, 0.0)
            .unwrap();
        assert_eq!(m.constraints[r].terms, vec![(0, 3.0)]);
    }
}
