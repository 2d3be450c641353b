//! Free-format MPS writer and reader.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{ModelError, MpsError};
use crate::model::{Model, ObjSense, RowSense, VarKind};

/// Name of the objective row, made unique against constraint names.
fn objective_row_name(model: &Model) -> String {
    let mut name = String::from("obj");
    while model.constraint_index(&name).is_some() {
        name.insert(0, '_');
    }
    name
}

fn check_len(name: &str) -> Result<(), ModelError> {
    if name.len() > 255 {
        Err(ModelError::NameTooLong(name.chars().take(32).collect()))
    } else {
        Ok(())
    }
}

/// Writes `model` in free MPS. Columns, rows and bounds follow declaration
/// order; integer columns are bracketed by INTORG/INTEND markers and binaries
/// get a `BV` bound. The objective constant is stored as the negated RHS of
/// the objective row.
pub fn write_mps(model: &Model) -> Result<String, ModelError> {
    model.validate()?;
    let obj = objective_row_name(model);
    for v in &model.variables {
        check_len(&v.name)?;
    }
    for c in &model.constraints {
        check_len(&c.name)?;
    }

    // column-major view of the matrix
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (i, c) in model.constraints.iter().enumerate() {
        for &(j, a) in &c.terms {
            cols[j].push((i, a));
        }
    }
    let mut obj_coef = vec![0.0; model.num_vars()];
    for &(j, c) in &model.objective.terms {
        obj_coef[j] += c;
    }

    let mut out = String::new();
    let name = if model.name.is_empty() { "krevise" } else { &model.name };
    let _ = writeln!(out, "NAME {}", name.replace(char::is_whitespace, "_"));
    out.push_str("OBJSENSE\n");
    out.push_str(match model.objective.sense {
        ObjSense::Minimize => "    MIN\n",
        ObjSense::Maximize => "    MAX\n",
    });
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N {obj}");
    for c in &model.constraints {
        let s = match c.sense {
            RowSense::Le => 'L',
            RowSense::Ge => 'G',
            RowSense::Eq => 'E',
        };
        let _ = writeln!(out, " {s} {}", c.name);
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (j, v) in model.variables.iter().enumerate() {
        let int = v.kind.is_integral();
        if int != in_int {
            let tag = if int { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, "    MARKER{marker} 'MARKER' '{tag}'");
            marker += 1;
            in_int = int;
        }
        let mut wrote = false;
        if obj_coef[j] != 0.0 {
            let _ = writeln!(out, "    {} {obj} {}", v.name, obj_coef[j]);
            wrote = true;
        }
        for &(i, a) in &cols[j] {
            let _ = writeln!(out, "    {} {} {a}", v.name, model.constraints[i].name);
            wrote = true;
        }
        if !wrote {
            let _ = writeln!(out, "    {} {obj} 0", v.name);
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER{marker} 'MARKER' 'INTEND'");
    }

    out.push_str("RHS\n");
    if model.objective.constant != 0.0 {
        let _ = writeln!(out, "    RHS {obj} {}", -model.objective.constant);
    }
    for c in &model.constraints {
        if c.rhs != 0.0 {
            let _ = writeln!(out, "    RHS {} {}", c.name, c.rhs);
        }
    }
    out.push_str("RANGES\n");

    out.push_str("BOUNDS\n");
    for v in &model.variables {
        let n = &v.name;
        let (lo, up) = (v.lower, v.upper);
        match v.kind {
            VarKind::Binary => {
                let _ = writeln!(out, " BV BND {n}");
                if lo != 0.0 {
                    let _ = writeln!(out, " LO BND {n} {lo}");
                }
                if up != 1.0 {
                    let _ = writeln!(out, " UP BND {n} {up}");
                }
            }
            VarKind::Integer => {
                write_lower(&mut out, n, lo);
                if up == f64::INFINITY {
                    let _ = writeln!(out, " PL BND {n}");
                } else {
                    let _ = writeln!(out, " UP BND {n} {up}");
                }
            }
            VarKind::Continuous => {
                if lo == up {
                    let _ = writeln!(out, " FX BND {n} {lo}");
                } else if lo == f64::NEG_INFINITY && up == f64::INFINITY {
                    let _ = writeln!(out, " FR BND {n}");
                } else {
                    if lo != 0.0 || up < 0.0 {
                        write_lower(&mut out, n, lo);
                    }
                    if up != f64::INFINITY {
                        let _ = writeln!(out, " UP BND {n} {up}");
                    }
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}

fn write_lower(out: &mut String, name: &str, lo: f64) {
    if lo == f64::NEG_INFINITY {
        let _ = writeln!(out, " MI BND {name}");
    } else {
        let _ = writeln!(out, " LO BND {name} {lo}");
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Header,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
}

/// Parses free MPS as written by [`write_mps`] (and the common subset used by
/// other tools). Free rows other than the first are ignored; RANGES entries
/// are rejected.
pub fn read_mps(text: &str) -> Result<Model, MpsError> {
    let mut model = Model::new("");
    let mut section = Section::Header;
    let mut obj_row: Option<String> = None;
    let mut free_rows: Vec<String> = Vec::new();
    let mut rows: Vec<(String, RowSense)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut row_terms: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut obj_terms: Vec<(usize, f64)> = Vec::new();
    let mut constant = 0.0;
    let mut sense = ObjSense::Minimize;
    let mut in_int = false;
    // (kind, lower, upper) per column, finalized after BOUNDS
    let mut cols: Vec<(String, VarKind, f64, f64)> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut ended = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let err = |message: String| MpsError::Syntax { line, message };
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(char::is_whitespace) {
            match tokens[0] {
                "NAME" => {
                    model.name = tokens.get(1).unwrap_or(&"").to_string();
                    section = Section::Header;
                }
                "OBJSENSE" => {
                    section = Section::ObjSense;
                    if let Some(s) = tokens.get(1) {
                        sense = parse_sense(s).ok_or_else(|| err(format!("bad OBJSENSE `{s}`")))?;
                    }
                }
                "ROWS" => section = Section::Rows,
                "COLUMNS" => section = Section::Columns,
                "RHS" => section = Section::Rhs,
                "RANGES" => section = Section::Ranges,
                "BOUNDS" => section = Section::Bounds,
                "ENDATA" => {
                    ended = true;
                    break;
                }
                other => return Err(err(format!("unknown section `{other}`"))),
            }
            continue;
        }
        match section {
            Section::Header => return Err(err("data before any section".into())),
            Section::ObjSense => {
                sense = parse_sense(tokens[0]).ok_or_else(|| err(format!("bad OBJSENSE `{}`", tokens[0])))?;
            }
            Section::Rows => {
                if tokens.len() != 2 {
                    return Err(err("ROWS entry needs a type and a name".into()));
                }
                let name = tokens[1].to_string();
                let s = match tokens[0] {
                    "N" => {
                        if obj_row.is_none() {
                            obj_row = Some(name);
                        } else {
                            free_rows.push(name);
                        }
                        continue;
                    }
                    "L" => RowSense::Le,
                    "G" => RowSense::Ge,
                    "E" => RowSense::Eq,
                    t => return Err(err(format!("unknown row type `{t}`"))),
                };
                if row_index.insert(name.clone(), rows.len()).is_some() {
                    return Err(ModelError::DuplicateConstraint(name).into());
                }
                rows.push((name, s));
                row_terms.push(Vec::new());
                rhs.push(0.0);
            }
            Section::Columns => {
                if tokens.len() >= 3 && tokens[1].trim_matches('\'') == "MARKER" {
                    match tokens[2].trim_matches('\'') {
                        "INTORG" => in_int = true,
                        "INTEND" => in_int = false,
                        m => return Err(err(format!("unknown marker `{m}`"))),
                    }
                    continue;
                }
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err("COLUMNS entry needs 3 or 5 fields".into()));
                }
                let name = tokens[0];
                let j = match col_index.get(name) {
                    Some(&j) => j,
                    None => {
                        let j = cols.len();
                        col_index.insert(name.to_string(), j);
                        let kind = if in_int { VarKind::Integer } else { VarKind::Continuous };
                        cols.push((name.to_string(), kind, 0.0, f64::INFINITY));
                        j
                    }
                };
                for pair in tokens[1..].chunks(2) {
                    let value = parse_num(pair[1]).ok_or_else(|| err(format!("bad number `{}`", pair[1])))?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        if value != 0.0 {
                            obj_terms.push((j, value));
                        }
                    } else if let Some(&i) = row_index.get(pair[0]) {
                        row_terms[i].push((j, value));
                    } else if !free_rows.iter().any(|r| r == pair[0]) {
                        return Err(err(format!("unknown row `{}`", pair[0])));
                    }
                }
            }
            Section::Rhs => {
                let fields = if tokens.len() % 2 == 1 {
                    &tokens[1..]
                } else {
                    &tokens[..]
                };
                for pair in fields.chunks(2) {
                    if pair.len() != 2 {
                        return Err(err("RHS entry needs row/value pairs".into()));
                    }
                    let value = parse_num(pair[1]).ok_or_else(|| err(format!("bad number `{}`", pair[1])))?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        constant = -value;
                    } else if let Some(&i) = row_index.get(pair[0]) {
                        rhs[i] = value;
                    } else if !free_rows.iter().any(|r| r == pair[0]) {
                        return Err(err(format!("unknown row `{}`", pair[0])));
                    }
                }
            }
            Section::Ranges => return Err(err("RANGES entries are not supported".into())),
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(err("BOUNDS entry needs type, set and column".into()));
                }
                let j = *col_index
                    .get(tokens[2])
                    .ok_or_else(|| err(format!("unknown column `{}`", tokens[2])))?;
                let value = match tokens.get(3) {
                    Some(t) => Some(parse_num(t).ok_or_else(|| err(format!("bad number `{t}`")))?),
                    None => None,
                };
                let need = |v: Option<f64>| v.ok_or_else(|| err(format!("bound `{}` needs a value", tokens[0])));
                let col = &mut cols[j];
                match tokens[0] {
                    "BV" => {
                        col.1 = VarKind::Binary;
                        col.2 = 0.0;
                        col.3 = 1.0;
                    }
                    "LO" => col.2 = need(value)?,
                    "UP" => col.3 = need(value)?,
                    "FX" => {
                        let v = need(value)?;
                        col.2 = v;
                        col.3 = v;
                    }
                    "FR" => {
                        col.2 = f64::NEG_INFINITY;
                        col.3 = f64::INFINITY;
                    }
                    "MI" => col.2 = f64::NEG_INFINITY,
                    "PL" => col.3 = f64::INFINITY,
                    "LI" => {
                        col.1 = VarKind::Integer;
                        col.2 = need(value)?;
                    }
                    "UI" => {
                        col.1 = VarKind::Integer;
                        col.3 = need(value)?;
                    }
                    t => return Err(err(format!("unknown bound type `{t}`"))),
                }
            }
        }
    }
    if !ended {
        return Err(MpsError::Syntax {
            line: text.lines().count(),
            message: "missing ENDATA".into(),
        });
    }

    for (name, kind, lo, up) in cols {
        model.add_var(name, kind, lo, up)?;
    }
    for (((name, s), terms), b) in rows.into_iter().zip(row_terms).zip(rhs) {
        model.add_constraint(name, terms, s, b)?;
    }
    model.set_objective(sense, obj_terms, constant);
    Ok(model)
}

fn parse_sense(s: &str) -> Option<ObjSense> {
    match s.to_ascii_uppercase().as_str() {
        "MIN" | "MINIMIZE" => Some(ObjSense::Minimize),
        "MAX" | "MAXIMIZE" => Some(ObjSense::Maximize),
        _ => None,
    }
}

fn parse_num(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "1e30" | "1e+30" => Some(f64::INFINITY),
        "-inf" | "-infinity" | "-1e30" | "-1e+30" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}
