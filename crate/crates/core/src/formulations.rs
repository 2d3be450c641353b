//! MILP formulations of the K-revision constraint over a block of strategic
//! variables, plus subtree cuts and the cut loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use krevise_milp::{Backend, Constraint, Model, RowSense, SolveResult, Status};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::revision::{enumerate_elbe, max_inconsistency, separate_binary_fast, structural_heights, ElbeSubtree};
use crate::tree::ScenarioTree;

/// Default cap on cut loop rounds.
pub const CUT_ROUNDS: usize = 500;
/// Node count above which all subtree constraints are not enumerated.
pub const ALL_CUTS_NODE_CAP: usize = 16;

const CUT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FormulationKind {
    #[serde(rename = "cp")]
    Cp,
    #[serde(rename = "cp+")]
    CpPlus,
    #[serde(rename = "st")]
    St,
    #[serde(rename = "stdp")]
    Stdp,
    #[serde(rename = "cp++")]
    CpPlusPlus,
    #[serde(rename = "path")]
    Path,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 6] = [
        FormulationKind::Cp,
        FormulationKind::CpPlus,
        FormulationKind::St,
        FormulationKind::Stdp,
        FormulationKind::CpPlusPlus,
        FormulationKind::Path,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormulationKind::Cp => "cp",
            FormulationKind::CpPlus => "cp+",
            FormulationKind::St => "st",
            FormulationKind::Stdp => "stdp",
            FormulationKind::CpPlusPlus => "cp++",
            FormulationKind::Path => "path",
        }
    }

    /// Only the plan-based formulations handle vector strategic blocks.
    pub fn supports_vectors(self) -> bool {
        matches!(self, FormulationKind::Cp | FormulationKind::CpPlus)
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormulationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FormulationKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Precondition(format!("unknown formulation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionFormulationSpec {
    pub kind: FormulationKind,
    #[serde(rename = "K")]
    pub k: usize,
    /// Plans are vectors over the strategic coordinates with one shared
    /// revision variable per node.
    #[serde(default)]
    pub vector_mode: bool,
}

impl RevisionFormulationSpec {
    pub fn new(kind: FormulationKind, k: usize) -> Self {
        Self {
            kind,
            k,
            vector_mode: false,
        }
    }
}

/// The strategic variables of a model: `vars[v][i]` is coordinate `i` at
/// node `v`, tagged `x:v` in the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XBlock {
    pub vars: Vec<Vec<usize>>,
}

fn coord_name(base: String, d: usize, i: usize) -> String {
    if d == 1 {
        base
    } else {
        format!("{base}_{i}")
    }
}

impl XBlock {
    /// Adds binary `x_v` (or `x_v_i`) variables for every node.
    pub fn add(model: &mut Model, tree: &ScenarioTree) -> Result<XBlock> {
        let mut vars = Vec::with_capacity(tree.len());
        for v in 0..tree.len() {
            let d = tree.strategic_dim(tree.stage(v));
            let mut row = Vec::with_capacity(d);
            for i in 0..d {
                let j = model.add_binary(coord_name(format!("x_{v}"), d, i))?;
                model.tag(format!("x:{v}"), j);
                row.push(j);
            }
            vars.push(row);
        }
        Ok(XBlock { vars })
    }

    /// Reads the block back from the `x:v` tags.
    pub fn from_model(model: &Model, tree: &ScenarioTree) -> Result<XBlock> {
        let mut vars = Vec::with_capacity(tree.len());
        for v in 0..tree.len() {
            let tagged = model
                .tagged(&format!("x:{v}"))
                .ok_or_else(|| Error::Dimension(format!("model has no strategic variable tagged x:{v}")))?;
            let d = tree.strategic_dim(tree.stage(v));
            if tagged.len() != d {
                return Err(Error::Dimension(format!(
                    "node {v} has {} strategic variables, its stage has dimension {d}",
                    tagged.len()
                )));
            }
            vars.push(tagged.to_vec());
        }
        if model.tagged(&format!("x:{}", tree.len())).is_some() {
            return Err(Error::Dimension(
                "model tags more strategic nodes than the tree has".into(),
            ));
        }
        Ok(XBlock { vars })
    }

    pub fn is_scalar(&self) -> bool {
        self.vars.iter().all(|row| row.len() == 1)
    }

    pub fn scalar(&self, v: usize) -> usize {
        self.vars[v][0]
    }

    /// Scalar x values read from a solution vector, clamped to [0, 1].
    pub fn values(&self, solution: &[f64]) -> Vec<f64> {
        self.vars.iter().map(|row| solution[row[0]].clamp(0.0, 1.0)).collect()
    }
}

/// Auxiliary variables created by a revision fragment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RevisionVars {
    /// `r[v]`, absent at the root and at dropped only-children.
    pub r: Vec<Option<usize>>,
    /// `pi[v][t - stage(v)][i]`, absent at dropped only-children.
    pub pi: Vec<Option<Vec<Vec<usize>>>>,
    /// `delta[(v, h)]`.
    pub delta: BTreeMap<(usize, usize), usize>,
}

impl RevisionVars {
    pub fn num_pi(&self) -> usize {
        self.pi.iter().flatten().flatten().map(Vec::len).sum()
    }

    pub fn num_r(&self) -> usize {
        self.r.iter().flatten().count()
    }
}

fn require_scalar(tree: &ScenarioTree, x: &XBlock, what: &str) -> Result<()> {
    if tree.is_one_dimensional() && x.is_scalar() {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "{what} needs a scalar strategic block; split the tree first or use cp/cp+ in vector mode"
        )))
    }
}

fn check_budget(tree: &ScenarioTree, k: usize) -> Result<()> {
    if k + 1 > tree.horizon() {
        Err(Error::Precondition(format!(
            "K = {k} is above T - 1 = {}",
            tree.horizon() - 1
        )))
    } else {
        Ok(())
    }
}

/// Adds a formulation of the given kind over `x`.
pub fn add_formulation(
    model: &mut Model,
    tree: &ScenarioTree,
    x: &XBlock,
    spec: &RevisionFormulationSpec,
) -> Result<RevisionVars> {
    check_budget(tree, spec.k)?;
    if !spec.kind.supports_vectors() {
        require_scalar(tree, x, spec.kind.name())?;
    } else if !x.is_scalar() && !spec.vector_mode {
        return Err(Error::Precondition(
            "strategic block is vector-valued; enable vector mode or split the tree".into(),
        ));
    }
    match spec.kind {
        FormulationKind::Cp => add_cp(model, tree, x, spec.k, false),
        FormulationKind::CpPlus => add_cp(model, tree, x, spec.k, true),
        FormulationKind::St => {
            add_all_subtree_constraints(model, tree, x, spec.k)?;
            Ok(RevisionVars::default())
        }
        FormulationKind::Stdp => add_stdp(model, tree, x, spec.k),
        FormulationKind::CpPlusPlus => add_cp_pp(model, tree, x, spec.k),
        FormulationKind::Path => add_path(model, tree, x, spec.k),
    }
}

/// A model holding only the strategic block and the formulation.
pub fn build_formulation(tree: &ScenarioTree, spec: &RevisionFormulationSpec) -> Result<(Model, XBlock, RevisionVars)> {
    let mut model = Model::new(format!("revision_{}", spec.kind.name()));
    let x = XBlock::add(&mut model, tree)?;
    let vars = add_formulation(&mut model, tree, &x, spec)?;
    Ok((model, x, vars))
}

/// Copies `base` and adds the formulation over its tagged strategic block.
pub fn attach_revision(base: &Model, tree: &ScenarioTree, spec: &RevisionFormulationSpec) -> Result<Model> {
    let mut model = base.clone();
    let x = XBlock::from_model(&model, tree)?;
    add_formulation(&mut model, tree, &x, spec)?;
    Ok(model)
}

/// Plan-based formulation. With `reduced`, only-children carry no plan or
/// revision variables and link through their nearest ancestor that is not
/// an only child.
pub fn add_cp(model: &mut Model, tree: &ScenarioTree, x: &XBlock, k: usize, reduced: bool) -> Result<RevisionVars> {
    let n = tree.len();
    let horizon = tree.horizon();
    let dropped = |v: usize| reduced && tree.is_only_child(v);
    let link = |v: usize| if reduced { tree.pa_bar(v) } else { tree.parent(v) };
    let mut vars = RevisionVars {
        r: vec![None; n],
        pi: vec![None; n],
        delta: BTreeMap::new(),
    };
    for v in 0..n {
        if dropped(v) {
            continue;
        }
        let mut rows = Vec::new();
        for t in tree.stage(v)..=horizon {
            let d = tree.strategic_dim(t);
            let mut coords = Vec::with_capacity(d);
            for i in 0..d {
                let j = model.add_binary(coord_name(format!("pi_{v}_{t}"), d, i))?;
                model.tag(format!("pi:{v}:{t}"), j);
                coords.push(j);
            }
            rows.push(coords);
        }
        vars.pi[v] = Some(rows);
        // the root has no link rows, but its revision still counts against every budget
        let j = model.add_binary(format!("r_{v}"))?;
        model.tag(format!("r:{v}"), j);
        vars.r[v] = Some(j);
    }
    fn pi_at<'a>(vars: &'a RevisionVars, tree: &ScenarioTree, v: usize, t: usize) -> &'a [usize] {
        &vars.pi[v].as_ref().expect("plan exists")[t - tree.stage(v)]
    }
    for v in 0..n {
        let t = tree.stage(v);
        let owner = if dropped(v) { link(v).unwrap() } else { v };
        let d = tree.strategic_dim(t);
        for i in 0..d {
            let p = pi_at(&vars, tree, owner, t)[i];
            model.add_constraint(
                coord_name(format!("compat_{v}"), d, i),
                [(x.vars[v][i], 1.0), (p, -1.0)],
                RowSense::Eq,
                0.0,
            )?;
        }
    }
    for v in 1..n {
        if dropped(v) {
            continue;
        }
        let up = link(v).unwrap();
        let r = vars.r[v].unwrap();
        for t in tree.stage(v)..=horizon {
            let d = tree.strategic_dim(t);
            for i in 0..d {
                let (a, b) = (pi_at(&vars, tree, v, t)[i], pi_at(&vars, tree, up, t)[i]);
                model.add_constraint(
                    coord_name(format!("link_up_{v}_{t}"), d, i),
                    [(r, 1.0), (a, -1.0), (b, 1.0)],
                    RowSense::Ge,
                    0.0,
                )?;
                model.add_constraint(
                    coord_name(format!("link_dn_{v}_{t}"), d, i),
                    [(r, 1.0), (a, 1.0), (b, -1.0)],
                    RowSense::Ge,
                    0.0,
                )?;
            }
        }
    }
    add_budget_rows(model, tree, &vars.r, k)?;
    Ok(vars)
}

fn add_budget_rows(model: &mut Model, tree: &ScenarioTree, r: &[Option<usize>], k: usize) -> Result<()> {
    for leaf in tree.leaves().collect::<Vec<_>>() {
        let terms: Vec<(usize, f64)> = tree
            .path_from_root(leaf)
            .into_iter()
            .filter_map(|v| r[v].map(|j| (j, 1.0)))
            .collect();
        model.add_constraint(format!("budget_{leaf}"), terms, RowSense::Le, k as f64)?;
    }
    Ok(())
}

/// Heights considered at `v` for budget `k`.
pub fn height_window(tree: &ScenarioTree, v: usize, k: usize) -> std::ops::RangeInclusive<usize> {
    let s = tree.stage(v);
    let lo = (k + 1).saturating_sub(s).max(1);
    let hi = (k + 1).min(tree.horizon() - s);
    lo..=hi
}

/// Same-stage ordered pairs whose join is `v`, grouped by stage.
fn pairs_below(tree: &ScenarioTree, v: usize, by_stage: &[Vec<Vec<usize>>]) -> Vec<(usize, usize)> {
    let kids = tree.children(v);
    let mut out = Vec::new();
    for s in tree.stage(v) + 1..=tree.horizon() {
        for (ia, &a) in kids.iter().enumerate() {
            for &b in &kids[ia + 1..] {
                let (la, lb) = (&by_stage[a][s - tree.stage(a)], &by_stage[b][s - tree.stage(b)]);
                for &p in la {
                    for &q in lb {
                        out.push((p, q));
                        out.push((q, p));
                    }
                }
            }
        }
    }
    out
}

/// `by_stage[v][s - stage(v)]`: nodes of T(v) at stage s.
fn descendants_by_stage(tree: &ScenarioTree) -> Vec<Vec<Vec<usize>>> {
    let n = tree.len();
    let horizon = tree.horizon();
    let mut out: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n];
    for v in (0..n).rev() {
        let s = tree.stage(v);
        let mut rows = vec![Vec::new(); horizon - s + 1];
        rows[0].push(v);
        for &c in tree.children(v) {
            for (i, row) in out[c].iter().enumerate() {
                rows[i + 1].extend_from_slice(row);
            }
        }
        out[v] = rows;
    }
    out
}

/// Continuous Δ(v, h) variables following the inconsistency recurrence,
/// with Δ(root, K+1) capped at 2^(K+1) − 2. Variables are created only
/// where a subtree of that height exists below `v`.
pub fn add_stdp(model: &mut Model, tree: &ScenarioTree, x: &XBlock, k: usize) -> Result<RevisionVars> {
    require_scalar(tree, x, "stdp")?;
    let n = tree.len();
    let exists = structural_heights(tree, k + 1);
    let mut vars = RevisionVars {
        r: vec![None; n],
        pi: vec![None; n],
        delta: BTreeMap::new(),
    };
    for v in 0..n {
        if tree.is_leaf(v) {
            continue;
        }
        for h in height_window(tree, v, k) {
            if exists[v][h] {
                let j = model.add_continuous(format!("D_{v}_{h}"), 0.0, f64::INFINITY)?;
                model.tag(format!("Delta:{v}:{h}"), j);
                vars.delta.insert((v, h), j);
            }
        }
    }
    let by_stage = descendants_by_stage(tree);
    for v in 0..n {
        if tree.is_leaf(v) {
            continue;
        }
        let pairs = pairs_below(tree, v, &by_stage);
        for h in height_window(tree, v, k) {
            let Some(&dv) = vars.delta.get(&(v, h)) else { continue };
            for &(p, q) in &pairs {
                let mut terms = vec![(dv, 1.0), (x.scalar(p), -1.0), (x.scalar(q), 1.0)];
                if h > 1 {
                    match (vars.delta.get(&(p, h - 1)), vars.delta.get(&(q, h - 1))) {
                        (Some(&dp), Some(&dq)) => {
                            terms.push((dp, -1.0));
                            terms.push((dq, -1.0));
                        }
                        _ => continue,
                    }
                }
                model.add_constraint(format!("dp_{v}_{h}_{p}_{q}"), terms, RowSense::Ge, 0.0)?;
            }
            for &u in tree.children(v) {
                if let Some(&du) = vars.delta.get(&(u, h)) {
                    model.add_constraint(format!("dp_{v}_{h}_c{u}"), [(dv, 1.0), (du, -1.0)], RowSense::Ge, 0.0)?;
                }
            }
        }
    }
    if let Some(&top) = vars.delta.get(&(0, k + 1)) {
        let cap = ((1u64 << (k + 1)) - 2) as f64;
        model.add_constraint("dp_cap", [(top, 1.0)], RowSense::Le, cap)?;
    }
    Ok(vars)
}

/// Reduced plan formulation, the Δ recurrence and the rows
/// Σ r(i) + Δ(v, h) ≤ K − h + 2^h − 1 over the path to `v`.
pub fn add_cp_pp(model: &mut Model, tree: &ScenarioTree, x: &XBlock, k: usize) -> Result<RevisionVars> {
    require_scalar(tree, x, "cp++")?;
    let mut vars = add_cp(model, tree, x, k, true)?;
    vars.delta = add_stdp(model, tree, x, k)?.delta;
    for (&(v, h), &dv) in &vars.delta {
        let mut terms: Vec<(usize, f64)> = tree
            .path_from_root(v)
            .into_iter()
            .filter_map(|i| vars.r[i].map(|j| (j, 1.0)))
            .collect();
        terms.push((dv, 1.0));
        let rhs = k as f64 - h as f64 + ((1u64 << h) - 1) as f64;
        model.add_constraint(format!("facet_{v}_{h}"), terms, RowSense::Le, rhs)?;
    }
    Ok(vars)
}

/// Nodes on the path between two same-stage nodes, without their join.
pub fn path_between(tree: &ScenarioTree, mu: usize, nu: usize) -> Vec<usize> {
    let j = tree.join_unchecked(mu, nu);
    let mut out = Vec::new();
    for end in [mu, nu] {
        let mut u = end;
        while u != j {
            out.push(u);
            u = tree.parent(u).unwrap();
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Revision variables only: every ordered same-stage pair (μ, ν) needs a
/// revision on the path between them once x(μ) > x(ν).
pub fn add_path(model: &mut Model, tree: &ScenarioTree, x: &XBlock, k: usize) -> Result<RevisionVars> {
    require_scalar(tree, x, "path")?;
    let n = tree.len();
    let mut r = vec![None; n];
    for (v, slot) in r.iter_mut().enumerate().skip(1) {
        let j = model.add_binary(format!("r_{v}"))?;
        model.tag(format!("r:{v}"), j);
        *slot = Some(j);
    }
    for t in 2..=tree.horizon() {
        let level: Vec<usize> = tree.nodes_at_stage(t).collect();
        for (a, &mu) in level.iter().enumerate() {
            for &nu in &level[a + 1..] {
                let path = path_between(tree, mu, nu);
                for (hi, lo) in [(mu, nu), (nu, mu)] {
                    let mut terms: Vec<(usize, f64)> = path.iter().map(|&v| (r[v].unwrap(), 1.0)).collect();
                    terms.push((x.scalar(hi), -1.0));
                    terms.push((x.scalar(lo), 1.0));
                    model.add_constraint(format!("path_{hi}_{lo}"), terms, RowSense::Ge, 0.0)?;
                }
            }
        }
    }
    add_budget_rows(model, tree, &r, k)?;
    Ok(RevisionVars {
        r,
        pi: vec![None; n],
        delta: BTreeMap::new(),
    })
}

/// Σ (x(u) − x(v)) over the pairs of an oriented subtree, at most
/// 2^h − 2.
pub fn subtree_constraint_of(s: &ElbeSubtree, x: &XBlock, name: impl Into<String>) -> Constraint {
    let mut terms = Vec::with_capacity(2 * s.pairs.len());
    for &(u, v) in &s.pairs {
        terms.push((x.scalar(u), 1.0));
        terms.push((x.scalar(v), -1.0));
    }
    Constraint {
        name: name.into(),
        terms,
        sense: RowSense::Le,
        rhs: ((1u64 << s.height) - 2) as f64,
    }
}

fn cut_name(s: &ElbeSubtree, seq: usize) -> String {
    format!("st:h={}:root={}:seq={seq}", s.height, s.root)
}

fn push_row(model: &mut Model, row: Constraint) -> Result<()> {
    model.add_constraint(row.name, row.terms, row.sense, row.rhs)?;
    Ok(())
}

/// Adds the subtree constraint of every orientation of every height-(K+1)
/// subtree. Only meant for small trees.
pub fn add_all_subtree_constraints(model: &mut Model, tree: &ScenarioTree, x: &XBlock, k: usize) -> Result<usize> {
    require_scalar(tree, x, "st")?;
    if tree.len() > ALL_CUTS_NODE_CAP {
        return Err(Error::TooLarge {
            what: "node count for enumerating every subtree constraint (use the cut loop)",
            limit: ALL_CUTS_NODE_CAP,
            got: tree.len(),
        });
    }
    let mut seq = 0;
    for s in enumerate_elbe(tree, k + 1) {
        let m = s.pairs.len();
        for flips in 0u64..(1 << m) {
            let mut o = s.clone();
            for (i, pair) in o.pairs.iter_mut().enumerate() {
                if (flips >> i) & 1 == 1 {
                    *pair = (pair.1, pair.0);
                }
            }
            push_row(model, subtree_constraint_of(&o, x, cut_name(&o, seq)))?;
            seq += 1;
        }
    }
    Ok(seq)
}

/// Σ_{w ≤ root} r(w) + Σ (x(u) − x(v)) ≤ K − h + 2^h − 1 for an oriented
/// subtree of height h ∈ [1, K] whose root lies at a stage above K − h.
pub fn facet_inequality_of(
    tree: &ScenarioTree,
    k: usize,
    s: &ElbeSubtree,
    x: &XBlock,
    r: &[Option<usize>],
) -> Result<Constraint> {
    let h = s.height;
    if h == 0 || h > k {
        return Err(Error::Precondition(format!("height {h} is outside [1, {k}]")));
    }
    if tree.stage(s.root) + h <= k {
        return Err(Error::Precondition(format!(
            "root {} sits at stage {}, which must exceed K - h = {}",
            s.root,
            tree.stage(s.root),
            k - h
        )));
    }
    let mut terms: Vec<(usize, f64)> = tree
        .path_from_root(s.root)
        .into_iter()
        .filter_map(|w| r[w].map(|j| (j, 1.0)))
        .collect();
    for &(u, v) in &s.pairs {
        terms.push((x.scalar(u), 1.0));
        terms.push((x.scalar(v), -1.0));
    }
    Ok(Constraint {
        name: format!("cpfacet:h={h}:root={}", s.root),
        terms,
        sense: RowSense::Le,
        rhs: k as f64 - h as f64 + ((1u64 << h) - 1) as f64,
    })
}

/// The degenerate single-leaf case: the revision budget of one scenario.
pub fn budget_row(tree: &ScenarioTree, k: usize, leaf: usize, r: &[Option<usize>]) -> Constraint {
    Constraint {
        name: format!("budget_{leaf}"),
        terms: tree
            .path_from_root(leaf)
            .into_iter()
            .filter_map(|w| r[w].map(|j| (j, 1.0)))
            .collect(),
        sense: RowSense::Le,
        rhs: k as f64,
    }
}

/// Groups of nodes forced to share their strategic decision when
/// adaptation is allowed only at the stages in `adaptive`: nodes of a stage
/// share x when they have the same ancestor at the latest adaptive stage
/// (or stage 1) not after it.
pub fn pa_groups(tree: &ScenarioTree, adaptive: &BTreeSet<usize>) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for v in 0..tree.len() {
        let t = tree.stage(v);
        let a = adaptive.range(..=t).next_back().copied().unwrap_or(1).max(1);
        groups.entry((t, tree.ancestor_at(v, a))).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Largest horizon for which every adaptive stage set is enumerated.
pub const PA_STAGE_CAP: usize = 16;

/// All stage sets L ⊆ [1, T] with |L| = min(K, T).
pub fn stage_subsets(horizon: usize, k: usize) -> Result<Vec<BTreeSet<usize>>> {
    if horizon > PA_STAGE_CAP {
        return Err(Error::TooLarge {
            what: "horizon for enumerating adaptive stage sets",
            limit: PA_STAGE_CAP,
            got: horizon,
        });
    }
    let k = k.min(horizon);
    Ok((0u32..1 << horizon)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (1..=horizon).filter(|t| (m >> (t - 1)) & 1 == 1).collect())
        .collect())
}

/// Equalities x(u) = x(v) inside every partially adaptive group.
pub fn partially_adaptive(
    model: &mut Model,
    tree: &ScenarioTree,
    x: &XBlock,
    adaptive: &BTreeSet<usize>,
) -> Result<usize> {
    if let Some(&bad) = adaptive.iter().find(|&&t| t == 0 || t > tree.horizon()) {
        return Err(Error::Precondition(format!("stage {bad} is outside [1, T]")));
    }
    let mut rows = 0;
    for group in pa_groups(tree, adaptive) {
        let head = group[0];
        for &v in &group[1..] {
            for (i, (&a, &b)) in x.vars[head].iter().zip(&x.vars[v]).enumerate() {
                model.add_constraint(format!("pa_{head}_{v}_{i}"), [(a, 1.0), (b, -1.0)], RowSense::Eq, 0.0)?;
                rows += 1;
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutMode {
    /// Solve LP relaxations and separate with the inconsistency DP.
    Lp,
    /// Solve MIPs and separate integral points with the fast separator.
    Mip,
}

#[derive(Debug, Clone)]
pub struct CutLoopOutcome {
    pub result: SolveResult,
    pub model: Model,
    pub cuts: Vec<ElbeSubtree>,
    pub rounds: usize,
}

/// Solves `base`, adds the most violated subtree constraint and repeats
/// until the strategic block satisfies every subtree constraint.
pub fn cut_loop_st(
    base: &Model,
    tree: &ScenarioTree,
    k: usize,
    backend: &dyn Backend,
    mode: CutMode,
    max_rounds: usize,
) -> Result<CutLoopOutcome> {
    check_budget(tree, k)?;
    let x = XBlock::from_model(base, tree)?;
    require_scalar(tree, &x, "st")?;
    let mut model = base.clone();
    let mut cuts = Vec::new();
    let threshold = ((1u64 << (k + 1).min(62)) - 2) as f64 + CUT_TOL;
    let mut last_bound = f64::NAN;
    for round in 1..=max_rounds {
        let result = backend.solve(&model, mode == CutMode::Lp)?;
        last_bound = result.bound;
        if result.status != Status::Optimal {
            return Ok(CutLoopOutcome {
                result,
                model,
                cuts,
                rounds: round,
            });
        }
        let xv = x.values(&result.values);
        let cut = match mode {
            CutMode::Lp => max_inconsistency(tree, &xv, k)?
                .filter(|(delta, _)| *delta > threshold)
                .map(|(_, w)| w),
            CutMode::Mip => {
                let rounded: Vec<f64> = xv.iter().map(|v| v.round()).collect();
                separate_binary_fast(tree, &rounded, k)?
            }
        };
        let Some(cut) = cut else {
            return Ok(CutLoopOutcome {
                result,
                model,
                cuts,
                rounds: round,
            });
        };
        push_row(&mut model, subtree_constraint_of(&cut, &x, cut_name(&cut, cuts.len())))?;
        cuts.push(cut);
    }
    Err(Error::NonConvergence {
        iterations: max_rounds,
        bound: last_bound,
    })
}
