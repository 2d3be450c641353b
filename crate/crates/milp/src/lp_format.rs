//! CPLEX-style LP writer, meant for reading models by eye.

use std::fmt::Write as _;

use crate::error::ModelError;
use crate::model::{Model, ObjSense, RowSense, VarKind};

fn linear(out: &mut String, model: &Model, terms: &[(usize, f64)]) {
    if terms.is_empty() {
        out.push_str(" 0");
        return;
    }
    for (k, &(j, a)) in terms.iter().enumerate() {
        let name = &model.variables[j].name;
        let sign = if a < 0.0 { '-' } else { '+' };
        if k == 0 && sign == '+' {
            let _ = write!(out, " {} {name}", a.abs());
        } else {
            let _ = write!(out, " {sign} {} {name}", a.abs());
        }
    }
}

pub fn write_lp(model: &Model) -> Result<String, ModelError> {
    model.validate()?;
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    out.push_str(match model.objective.sense {
        ObjSense::Minimize => "Minimize\n",
        ObjSense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    linear(&mut out, model, &model.objective.terms);
    if model.objective.constant != 0.0 {
        let c = model.objective.constant;
        let _ = write!(out, " {} {}", if c < 0.0 { '-' } else { '+' }, c.abs());
    }
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        let _ = write!(out, " {}:", c.name);
        linear(&mut out, model, &c.terms);
        let op = match c.sense {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            continue;
        }
        let n = &v.name;
        match (v.lower, v.upper) {
            (lo, up) if lo == up => {
                let _ = writeln!(out, " {n} = {lo}");
            }
            (f64::NEG_INFINITY, f64::INFINITY) => {
                let _ = writeln!(out, " {n} free");
            }
            (lo, f64::INFINITY) if lo == 0.0 => {}
            (lo, up) => {
                let lo = if lo == f64::NEG_INFINITY {
                    "-inf".to_string()
                } else {
                    lo.to_string()
                };
                let up = if up == f64::INFINITY {
                    "+inf".to_string()
                } else {
                    up.to_string()
                };
                let _ = writeln!(out, " {lo} <= {n} <= {up}");
            }
        }
    }
    let ints: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Integer)
        .map(|v| v.name.as_str())
        .collect();
    if !ints.is_empty() {
        out.push_str("General\n");
        for n in ints {
            let _ = writeln!(out, " {n}");
        }
    }
    let bins: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !bins.is_empty() {
        out.push_str("Binary\n");
        for n in bins {
            let _ = writeln!(out, " {n}");
        }
    }
    out.push_str("End\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_lp_text() {
        let mut m = Model::new("toy");
        let x1 = m.add_binary("x1").unwrap();
        let x2 = m.add_binary("x2").unwrap();
        let y = m.add_continuous("y", -1.0, 4.0).unwrap();
        m.add_constraint("c1", [(x1, 1.0), (x2, 1.0)], RowSense::Le, 1.0)
            .unwrap();
        m.add_constraint("c2", [(x1, -2.0), (y, 1.0)], RowSense::Ge, 0.5)
            .unwrap();
        m.set_objective(ObjSense::Maximize, [(x1, 1.0), (x2, 1.0)], 0.0);
        let text = write_lp(&m).unwrap();
        assert_eq!(
            text,
            "\\ toy\nMaximize\n obj: 1 x1 + 1 x2\nSubject To\n c1: 1 x1 + 1 x2 <= 1\n c2: - 2 x1 + 1 y >= 0.5\nBounds\n -1 <= y <= 4\nBinary\n x1\n x2\nEnd\n"
        );
    }
}
