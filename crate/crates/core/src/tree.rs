//! Scenario trees: storage, queries, generators and JSON I/O.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of stages of a generated B-tree.
pub const BTREE_STAGE_CAP: usize = 20;
/// Default number of S-tree construction attempts.
pub const STREE_ATTEMPTS: usize = 10_000;

const PROB_TOL: f64 = 1e-9;

/// First broken invariant found by [`ScenarioTree::validate`] or by a
/// constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeViolation {
    pub message: String,
    pub nodes: Vec<usize>,
}

impl TreeViolation {
    fn new(message: impl Into<String>, nodes: Vec<usize>) -> Self {
        Self {
            message: message.into(),
            nodes,
        }
    }
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.nodes.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{} (nodes {:?})", self.message, self.nodes)
        }
    }
}

impl std::error::Error for TreeViolation {}

/// A rooted scenario tree with root 0 and `parent(v) < v` for every other
/// node. Stages start at 1 at the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeJson", try_from = "TreeJson")]
pub struct ScenarioTree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    stage: Vec<usize>,
    horizon: usize,
    strategic_dim: Vec<usize>,
    /// Probability of reaching each node (sum over the leaves below it).
    prob: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub path: Vec<usize>,
    pub probability: f64,
}

impl ScenarioTree {
    /// Builds a tree from a parent array. Leaf probabilities default to
    /// uniform branching; strategic dimensions default to 1.
    pub fn from_parents(
        parents: &[Option<usize>],
        leaf_prob: Option<&BTreeMap<usize, f64>>,
        strategic_dim: Option<Vec<usize>>,
    ) -> Result<Self, TreeViolation> {
        let n = parents.len();
        if n == 0 {
            return Err(TreeViolation::new("tree has no nodes", vec![]));
        }
        if parents[0].is_some() {
            return Err(TreeViolation::new("node 0 must be the root", vec![0]));
        }
        let mut children = vec![Vec::new(); n];
        let mut stage = vec![1; n];
        for (v, p) in parents.iter().enumerate().skip(1) {
            match *p {
                Some(p) if p < v => {
                    children[p].push(v);
                    stage[v] = stage[p] + 1;
                }
                Some(_) => return Err(TreeViolation::new("parent id must be smaller than child id", vec![v])),
                None => return Err(TreeViolation::new("more than one root", vec![0, v])),
            }
        }
        let horizon = *stage.iter().max().unwrap();
        let mut prob = vec![0.0; n];
        match leaf_prob {
            Some(map) => {
                for (&leaf, &p) in map {
                    if leaf >= n || !children[leaf].is_empty() {
                        return Err(TreeViolation::new("probability given for a non-leaf", vec![leaf]));
                    }
                    prob[leaf] = p;
                }
                for v in (1..n).rev() {
                    let p = parents[v].unwrap();
                    prob[p] += prob[v];
                }
            }
            None => {
                prob[0] = 1.0;
                for v in 0..n {
                    let k = children[v].len() as f64;
                    for &c in &children[v] {
                        prob[c] = prob[v] / k;
                    }
                }
            }
        }
        let strategic_dim = strategic_dim.unwrap_or_else(|| vec![1; horizon]);
        Ok(Self {
            parent: parents.to_vec(),
            children,
            stage,
            horizon,
            strategic_dim,
            prob,
        })
    }

    /// Checks every structural and probabilistic invariant.
    pub fn validate(&self) -> Result<(), TreeViolation> {
        let off: Vec<usize> = self.leaves().filter(|&l| self.stage[l] != self.horizon).collect();
        if !off.is_empty() {
            return Err(TreeViolation::new("leaf not at stage T", off));
        }
        let bad: Vec<usize> = self
            .leaves()
            .filter(|&l| !(self.prob[l] > 0.0 && self.prob[l] <= 1.0 + PROB_TOL))
            .collect();
        if !bad.is_empty() {
            return Err(TreeViolation::new("leaf probability outside (0, 1]", bad));
        }
        let mass: f64 = self.leaves().map(|l| self.prob[l]).sum();
        if (mass - 1.0).abs() > PROB_TOL {
            return Err(TreeViolation::new(format!("probability mass {mass}"), vec![]));
        }
        if self.strategic_dim.len() != self.horizon || self.strategic_dim.contains(&0) {
            return Err(TreeViolation::new(
                format!(
                    "strategic_dim must list a positive entry for each of the {} stages",
                    self.horizon
                ),
                vec![],
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        0
    }

    /// Number of stages T.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn stage(&self, v: usize) -> usize {
        self.stage[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| self.is_leaf(v))
    }

    pub fn nodes_at_stage(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&v| self.stage[v] == t)
    }

    /// Probability that the process passes through `v`.
    pub fn node_prob(&self, v: usize) -> f64 {
        self.prob[v]
    }

    pub fn leaf_prob(&self, leaf: usize) -> f64 {
        self.prob[leaf]
    }

    /// Strategic dimension d¹ of a stage (1-based).
    pub fn strategic_dim(&self, t: usize) -> usize {
        self.strategic_dim[t - 1]
    }

    pub fn strategic_dims(&self) -> &[usize] {
        &self.strategic_dim
    }

    pub fn set_strategic_dims(&mut self, dims: Vec<usize>) -> Result<(), TreeViolation> {
        if dims.len() != self.horizon || dims.contains(&0) {
            return Err(TreeViolation::new("strategic_dim must have T positive entries", vec![]));
        }
        self.strategic_dim = dims;
        Ok(())
    }

    pub fn is_one_dimensional(&self) -> bool {
        self.strategic_dim.iter().all(|&d| d == 1)
    }

    pub fn check(&self, v: usize) -> Result<()> {
        if v < self.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(v))
        }
    }

    /// Nodes from the root down to `v`, inclusive.
    pub fn path_from_root(&self, v: usize) -> Vec<usize> {
        let mut path = vec![v];
        let mut u = v;
        while let Some(p) = self.parent[u] {
            path.push(p);
            u = p;
        }
        path.reverse();
        path
    }

    /// Ancestor of `v` at stage `t` (`v` itself when `t` is its stage).
    pub fn ancestor_at(&self, v: usize, t: usize) -> usize {
        debug_assert!(t >= 1 && t <= self.stage[v]);
        let mut u = v;
        while self.stage[u] > t {
            u = self.parent[u].unwrap();
        }
        u
    }

    /// True when `a` lies on the path from the root to `v` (including `v`).
    pub fn is_ancestor_or_self(&self, a: usize, v: usize) -> bool {
        self.stage[a] <= self.stage[v] && self.ancestor_at(v, self.stage[a]) == a
    }

    /// Deepest common ancestor.
    pub fn join(&self, u: usize, v: usize) -> Result<usize> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.join_unchecked(u, v))
    }

    pub(crate) fn join_unchecked(&self, u: usize, v: usize) -> usize {
        let t = self.stage[u].min(self.stage[v]);
        let (mut a, mut b) = (self.ancestor_at(u, t), self.ancestor_at(v, t));
        while a != b {
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        a
    }

    /// All nodes of the subtree rooted at `v`, in increasing id order.
    pub fn descendants(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.children[out[i]]);
            i += 1;
        }
        out.sort_unstable();
        out
    }

    pub fn scenarios(&self) -> Vec<Scenario> {
        self.leaves()
            .map(|l| Scenario {
                path: self.path_from_root(l),
                probability: self.prob[l],
            })
            .collect()
    }

    pub fn num_scenarios(&self) -> usize {
        self.leaves().count()
    }

    /// Non-root nodes whose parent has exactly one child.
    pub fn is_only_child(&self, v: usize) -> bool {
        matches!(self.parent[v], Some(p) if self.children[p].len() == 1)
    }

    /// Nearest proper ancestor of `v` that is not an only child.
    pub fn pa_bar(&self, v: usize) -> Option<usize> {
        let mut u = self.parent[v]?;
        while self.is_only_child(u) {
            u = self.parent[u].unwrap();
        }
        Some(u)
    }

    /// Relabels nodes in breadth-first order (children kept in their current
    /// order). Returns the tree and, for each new id, the old id.
    pub fn bfs_relabel(&self) -> (ScenarioTree, Vec<usize>) {
        let mut order = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([0]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            queue.extend(self.children[v].iter().copied());
        }
        let mut new_id = vec![0; self.len()];
        for (i, &v) in order.iter().enumerate() {
            new_id[v] = i;
        }
        let parents: Vec<Option<usize>> = order.iter().map(|&v| self.parent[v].map(|p| new_id[p])).collect();
        let probs: BTreeMap<usize, f64> = self.leaves().map(|l| (new_id[l], self.prob[l])).collect();
        let tree = ScenarioTree::from_parents(&parents, Some(&probs), Some(self.strategic_dim.clone()))
            .expect("relabeling keeps a valid parent order");
        (tree, order)
    }

    /// Replaces each stage-t node with a path of d¹_t nodes of dimension 1.
    /// The returned correspondence maps each new node to (original node,
    /// coordinate).
    pub fn split_multidim(&self) -> (ScenarioTree, Vec<(usize, usize)>) {
        let mut parents: Vec<Option<usize>> = Vec::new();
        let mut corr: Vec<(usize, usize)> = Vec::new();
        let mut last_copy = vec![0; self.len()];
        let mut queue = VecDeque::from([(0usize, None::<usize>)]);
        while let Some((v, above)) = queue.pop_front() {
            let d = self.strategic_dim(self.stage[v]);
            let mut prev = above;
            for i in 0..d {
                let id = parents.len();
                parents.push(prev);
                corr.push((v, i));
                prev = Some(id);
            }
            last_copy[v] = prev.unwrap();
            for &c in &self.children[v] {
                queue.push_back((c, prev));
            }
        }
        let probs: BTreeMap<usize, f64> = self.leaves().map(|l| (last_copy[l], self.prob[l])).collect();
        let split = ScenarioTree::from_parents(&parents, Some(&probs), None).expect("split keeps a valid parent order");
        // the queue above emits whole paths, so ids are not BFS; relabel
        let (bfs, order) = split.bfs_relabel();
        let corr = order.iter().map(|&old| corr[old]).collect();
        (bfs, corr)
    }
}

/// Perfect binary tree with `t` stages and 2^t − 1 nodes.
pub fn generate_btree(t: usize) -> Result<ScenarioTree> {
    generate_btree_capped(t, BTREE_STAGE_CAP)
}

pub fn generate_btree_capped(t: usize, cap: usize) -> Result<ScenarioTree> {
    if t == 0 {
        return Err(Error::Precondition("a tree needs at least one stage".into()));
    }
    if t > cap {
        return Err(Error::TooLarge {
            what: "B-tree stage count",
            limit: cap,
            got: t,
        });
    }
    let n = (1usize << t) - 1;
    let parents: Vec<Option<usize>> = (0..n).map(|v| (v > 0).then(|| (v - 1) / 2)).collect();
    Ok(ScenarioTree::from_parents(&parents, None, None)?)
}

/// A single path with `t` stages.
pub fn generate_path(t: usize) -> Result<ScenarioTree> {
    if t == 0 {
        return Err(Error::Precondition("a tree needs at least one stage".into()));
    }
    let parents: Vec<Option<usize>> = (0..t).map(|v| v.checked_sub(1)).collect();
    Ok(ScenarioTree::from_parents(&parents, None, None)?)
}

/// Parameters of the sparse random tree generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct STreeParams {
    pub target_nodes: usize,
    #[serde(rename = "T")]
    pub stages: usize,
    pub m: u64,
    pub rho: f64,
    pub tolerance: f64,
    pub seed: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    STREE_ATTEMPTS
}

impl STreeParams {
    pub fn new(target_nodes: usize, stages: usize, m: u64, rho: f64, tolerance: f64, seed: u64) -> Self {
        Self {
            target_nodes,
            stages,
            m,
            rho,
            tolerance,
            seed,
            max_attempts: STREE_ATTEMPTS,
        }
    }
}

/// Sparse tree: repeatedly expand a uniformly chosen childless node below
/// the last stage with max{Binomial(m, rho), 1} children, retrying the whole
/// construction until the node count is within the tolerance band.
pub fn generate_stree(params: &STreeParams) -> Result<ScenarioTree> {
    let STreeParams {
        target_nodes,
        stages,
        m,
        rho,
        tolerance,
        seed,
        max_attempts,
    } = *params;
    if stages == 0 || m == 0 || !(rho > 0.0 && rho <= 1.0) || tolerance < 0.0 {
        return Err(Error::Precondition(
            "S-tree needs T >= 1, m >= 1, 0 < rho <= 1 and tolerance >= 0".into(),
        ));
    }
    let lo = target_nodes as f64 * (1.0 - tolerance) - 1e-9;
    let hi = target_nodes as f64 * (1.0 + tolerance) + 1e-9;
    let binom = Binomial::new(m, rho).map_err(|e| Error::Precondition(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_size = 0;
    for _ in 0..max_attempts {
        let mut parents: Vec<Option<usize>> = vec![None];
        let mut stage = vec![1usize];
        let mut open: Vec<usize> = if stages > 1 { vec![0] } else { vec![] };
        while !open.is_empty() {
            let v = open.swap_remove(rng.random_range(0..open.len()));
            let k = binom.sample(&mut rng).max(1);
            for _ in 0..k {
                let id = parents.len();
                parents.push(Some(v));
                stage.push(stage[v] + 1);
                if stage[id] < stages {
                    open.push(id);
                }
            }
            if parents.len() as f64 > hi {
                break;
            }
        }
        last_size = parents.len();
        if !open.is_empty() || (last_size as f64) < lo || (last_size as f64) > hi {
            continue;
        }
        let tree = ScenarioTree::from_parents(&parents, None, None)?;
        return Ok(tree.bfs_relabel().0);
    }
    Err(Error::Generation {
        attempts: max_attempts,
        last_size,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Shape(Vec<Shape>);

impl Shape {
    fn size(&self) -> usize {
        1 + self.0.iter().map(Shape::size).sum::<usize>()
    }
}

/// Every tree (up to isomorphism) with all leaves at the same stage, at most
/// `max_nodes` nodes and at most `max_stages` stages.
pub fn enumerate_trees(max_nodes: usize, max_stages: usize) -> Vec<ScenarioTree> {
    // shapes[h] = all shapes with h stages and at most max_nodes nodes
    let mut shapes: Vec<Vec<Shape>> = vec![Vec::new(), vec![Shape(vec![])]];
    for h in 2..=max_stages {
        let below = &shapes[h - 1];
        let mut out = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        multisets(below, 0, max_nodes.saturating_sub(1), &mut stack, &mut out);
        shapes.push(out);
    }
    let mut trees = Vec::new();
    for level in shapes.iter().skip(1).take(max_stages) {
        for s in level {
            let mut parents = vec![None];
            flatten(s, 0, &mut parents);
            let tree = ScenarioTree::from_parents(&parents, None, None).unwrap();
            trees.push(tree.bfs_relabel().0);
        }
    }
    trees
}

fn multisets(below: &[Shape], start: usize, budget: usize, stack: &mut Vec<usize>, out: &mut Vec<Shape>) {
    if !stack.is_empty() {
        out.push(Shape(stack.iter().map(|&i| below[i].clone()).collect()));
    }
    for i in start..below.len() {
        let s = below[i].size();
        if s <= budget {
            stack.push(i);
            multisets(below, i, budget - s, stack, out);
            stack.pop();
        }
    }
}

fn flatten(s: &Shape, id: usize, parents: &mut Vec<Option<usize>>) {
    for c in &s.0 {
        let cid = parents.len();
        parents.push(Some(id));
        flatten(c, cid, parents);
    }
}

/// JSON form: `{"T", "parents", "stage", "strategic_dim", "leaf_prob"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub parents: Vec<Option<usize>>,
    pub stage: Vec<usize>,
    pub strategic_dim: Vec<usize>,
    pub leaf_prob: BTreeMap<String, f64>,
}

impl From<&ScenarioTree> for TreeJson {
    fn from(t: &ScenarioTree) -> Self {
        Self {
            horizon: t.horizon,
            parents: t.parent.clone(),
            stage: t.stage.clone(),
            strategic_dim: t.strategic_dim.clone(),
            leaf_prob: t.leaves().map(|l| (l.to_string(), t.prob[l])).collect(),
        }
    }
}

impl From<ScenarioTree> for TreeJson {
    fn from(t: ScenarioTree) -> Self {
        TreeJson::from(&t)
    }
}

impl TryFrom<TreeJson> for ScenarioTree {
    type Error = Error;

    fn try_from(j: TreeJson) -> Result<Self> {
        let mut probs = BTreeMap::new();
        for (k, p) in &j.leaf_prob {
            let id: usize = k
                .parse()
                .map_err(|_| TreeViolation::new(format!("bad leaf id `{k}`"), vec![]))?;
            probs.insert(id, *p);
        }
        let tree = ScenarioTree::from_parents(&j.parents, Some(&probs), Some(j.strategic_dim))?;
        if j.stage != tree.stage {
            let bad: Vec<usize> = (0..tree.len())
                .filter(|&v| j.stage.get(v) != Some(&tree.stage[v]))
                .collect();
            return Err(TreeViolation::new("stage list disagrees with parents", bad).into());
        }
        if j.horizon != tree.horizon {
            return Err(TreeViolation::new(
                format!("T is {} but the deepest stage is {}", j.horizon, tree.horizon),
                vec![],
            )
            .into());
        }
        tree.validate()?;
        Ok(tree)
    }
}

impl ScenarioTree {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TreeJson::from(self)).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: TreeJson = serde_json::from_str(text)?;
        j.try_into()
    }
}

/// Draws a random tree with all leaves at stage `stages` and at most
/// `max_nodes` nodes (used by property tests and sweeps).
pub fn random_tree(rng: &mut impl Rng, stages: usize, max_nodes: usize) -> ScenarioTree {
    loop {
        let mut parents: Vec<Option<usize>> = vec![None];
        let mut frontier = vec![0usize];
        for _ in 1..stages {
            let mut next = Vec::new();
            for &v in &frontier {
                let k = rng.random_range(1..=3);
                for _ in 0..k {
                    next.push(parents.len());
                    parents.push(Some(v));
                }
            }
            frontier = next;
        }
        if parents.len() <= max_nodes {
            let t = ScenarioTree::from_parents(&parents, None, None).unwrap();
            return t.bfs_relabel().0;
        }
    }
}
