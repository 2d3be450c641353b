//! Plans, revisions and K-revisability of strategic policies.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::ScenarioTree;

/// Node count above which the exhaustive plan search refuses to run.
pub const BRUTEFORCE_NODE_CAP: usize = 18;

const VALUE_TOL: f64 = 1e-9;

/// Checks that `x` has one entry per node, each in [0, 1].
pub fn check_policy(tree: &ScenarioTree, x: &[f64]) -> Result<()> {
    if x.len() != tree.len() {
        return Err(Error::Dimension(format!(
            "policy has {} entries for {} nodes",
            x.len(),
            tree.len()
        )));
    }
    if let Some(v) = (0..x.len()).find(|&v| !(x[v] >= -VALUE_TOL && x[v] <= 1.0 + VALUE_TOL)) {
        return Err(Error::Policy(format!("x({v}) = {} is outside [0, 1]", x[v])));
    }
    Ok(())
}

/// Checks `x` and converts it to booleans; every entry must be 0 or 1.
pub fn binary_policy(tree: &ScenarioTree, x: &[f64]) -> Result<Vec<bool>> {
    check_policy(tree, x)?;
    x.iter()
        .enumerate()
        .map(|(v, &val)| {
            if val.abs() <= VALUE_TOL {
                Ok(false)
            } else if (val - 1.0).abs() <= VALUE_TOL {
                Ok(true)
            } else {
                Err(Error::Policy(format!("x({v}) = {val} is not binary")))
            }
        })
        .collect()
}

fn require_one_dimensional(tree: &ScenarioTree) -> Result<()> {
    if tree.is_one_dimensional() {
        Ok(())
    } else {
        Err(Error::Precondition(
            "strategic dimension must be 1 at every stage; split the tree first".into(),
        ))
    }
}

/// One plan per node; `plans[v][i]` is the decision planned at `v` for
/// stage `stage(v) + i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanAdjustmentPolicy {
    pub plans: Vec<Vec<bool>>,
}

impl PlanAdjustmentPolicy {
    fn check(&self, tree: &ScenarioTree) -> Result<()> {
        if self.plans.len() != tree.len() {
            return Err(Error::Dimension(format!(
                "{} plans for {} nodes",
                self.plans.len(),
                tree.len()
            )));
        }
        for (v, p) in self.plans.iter().enumerate() {
            let want = tree.horizon() - tree.stage(v) + 1;
            if p.len() != want {
                return Err(Error::Dimension(format!(
                    "plan at node {v} has length {}, expected {want}",
                    p.len()
                )));
            }
        }
        Ok(())
    }

    /// Plan entry of `v` for absolute stage `t`.
    pub fn at(&self, tree: &ScenarioTree, v: usize, t: usize) -> bool {
        self.plans[v][t - tree.stage(v)]
    }
}

/// Nodes whose plan differs from the parent's plan on some shared stage.
pub fn revision_policy_of(tree: &ScenarioTree, pi: &PlanAdjustmentPolicy) -> Result<Vec<bool>> {
    pi.check(tree)?;
    Ok((0..tree.len())
        .map(|v| match tree.parent(v) {
            None => false,
            Some(p) => pi.plans[v][..] != pi.plans[p][1..],
        })
        .collect())
}

pub fn is_compatible(tree: &ScenarioTree, pi: &PlanAdjustmentPolicy, x: &[f64]) -> Result<bool> {
    pi.check(tree)?;
    let x = binary_policy(tree, x)?;
    Ok((0..tree.len()).all(|v| pi.plans[v][0] == x[v]))
}

/// Largest number of revisions along any root-to-leaf path.
pub fn max_revisions_per_scenario(tree: &ScenarioTree, r: &[bool]) -> usize {
    let mut count = vec![0usize; tree.len()];
    for v in 1..tree.len() {
        count[v] = count[tree.parent(v).unwrap()] + usize::from(r[v]);
    }
    tree.leaves().map(|l| count[l]).max().unwrap_or(0)
}

/// Exhaustive search for a compatible plan adjustment policy with at most
/// `k` revisions per scenario.
pub fn is_k_revisable_bruteforce(tree: &ScenarioTree, x: &[f64], k: usize) -> Result<bool> {
    require_one_dimensional(tree)?;
    if tree.len() > BRUTEFORCE_NODE_CAP {
        return Err(Error::TooLarge {
            what: "node count for exhaustive plan search",
            limit: BRUTEFORCE_NODE_CAP,
            got: tree.len(),
        });
    }
    let x = binary_policy(tree, x)?;
    let mut search = PlanSearch {
        tree,
        x: &x,
        feasible: HashMap::new(),
        revise: HashMap::new(),
    };
    Ok(search.any_plan(0, k))
}

struct PlanSearch<'a> {
    tree: &'a ScenarioTree,
    x: &'a [bool],
    feasible: HashMap<(usize, usize, u32), bool>,
    revise: HashMap<(usize, usize), bool>,
}

impl PlanSearch<'_> {
    /// Can the subtree of `v` be served with `k` revisions left when `v`
    /// inherits the plan suffix `plan` (bit 0 is the stage of `v`)?
    fn inherits(&mut self, v: usize, k: usize, plan: u32) -> bool {
        if let Some(&b) = self.feasible.get(&(v, k, plan)) {
            return b;
        }
        let keep = (plan & 1 == 1) == self.x[v]
            && self
                .tree
                .children(v)
                .to_vec()
                .into_iter()
                .all(|u| self.inherits(u, k, plan >> 1));
        let ok = keep || (k >= 1 && self.any_plan(v, k - 1));
        self.feasible.insert((v, k, plan), ok);
        ok
    }

    /// Is there a fresh plan at `v`, starting with x(v), such that every
    /// child copes with `left` revisions?
    fn any_plan(&mut self, v: usize, left: usize) -> bool {
        let key = (v, left);
        if let Some(&b) = self.revise.get(&key) {
            return b;
        }
        let len = self.tree.horizon() - self.tree.stage(v) + 1;
        let head = u32::from(self.x[v]);
        let children = self.tree.children(v).to_vec();
        let mut ok = false;
        for tail in 0u32..(1 << (len - 1)) {
            let plan = head | (tail << 1);
            if children.iter().all(|&u| self.inherits(u, left, plan >> 1)) {
                ok = true;
                break;
            }
        }
        self.revise.insert(key, ok);
        ok
    }
}

/// Perfect binary structure of same-stage sibling pairs embedded in a
/// scenario tree. `pairs` is stored in heap order: the pairs hanging below
/// the first and second member of pair `i` are `2i + 1` and `2i + 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElbeSubtree {
    pub root: usize,
    pub height: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl ElbeSubtree {
    pub fn num_pairs(height: usize) -> usize {
        (1usize << height) - 1
    }

    pub fn nodes(&self) -> Vec<usize> {
        let mut out = vec![self.root];
        for &(p, q) in &self.pairs {
            out.push(p);
            out.push(q);
        }
        out
    }

    /// Member above pair `i` (the root for the top pair).
    pub fn parent_of_pair(&self, i: usize) -> usize {
        if i == 0 {
            self.root
        } else {
            let (a, b) = self.pairs[(i - 1) / 2];
            if i % 2 == 1 {
                a
            } else {
                b
            }
        }
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        tree.check(self.root)?;
        if self.height == 0 || self.pairs.len() != Self::num_pairs(self.height) {
            return Err(Error::Precondition(format!(
                "height {} needs {} pairs, found {}",
                self.height,
                Self::num_pairs(self.height.max(1)),
                self.pairs.len()
            )));
        }
        for (i, &(p, q)) in self.pairs.iter().enumerate() {
            tree.check(p)?;
            tree.check(q)?;
            if p == q || tree.stage(p) != tree.stage(q) {
                return Err(Error::Precondition(format!(
                    "pair ({p}, {q}) is not two distinct same-stage nodes"
                )));
            }
            let above = self.parent_of_pair(i);
            let below = |w: usize| w != above && tree.is_ancestor_or_self(above, w);
            if !below(p) || !below(q) {
                return Err(Error::Precondition(format!(
                    "pair ({p}, {q}) is not below node {above}"
                )));
            }
        }
        let (p, q) = self.pairs[0];
        if tree.join_unchecked(p, q) != self.root {
            return Err(Error::Precondition(format!(
                "root {} is not the join of the top pair",
                self.root
            )));
        }
        Ok(())
    }

    /// Sum of |x(u) − x(v)| over sibling pairs.
    pub fn inconsistency(&self, x: &[f64]) -> f64 {
        self.pairs.iter().map(|&(p, q)| (x[p] - x[q]).abs()).sum()
    }

    /// Sum of x(u) − x(v) over the pairs as ordered.
    pub fn oriented_value(&self, x: &[f64]) -> f64 {
        self.pairs.iter().map(|&(p, q)| x[p] - x[q]).sum()
    }

    /// Every pair differs in x.
    pub fn is_inconsistent(&self, x: &[f64]) -> bool {
        self.pairs.iter().all(|&(p, q)| (x[p] - x[q]).abs() > VALUE_TOL)
    }

    /// Orders each pair so that the first member has the larger x.
    /// The pairs hanging below the two members move with them.
    pub fn orient(&mut self, x: &[f64]) {
        for i in 0..self.pairs.len() {
            let (p, q) = self.pairs[i];
            if x[p] < x[q] {
                self.pairs[i] = (q, p);
                self.swap_below(2 * i + 1, 2 * i + 2);
            }
        }
    }

    fn swap_below(&mut self, a: usize, b: usize) {
        if b >= self.pairs.len() {
            return;
        }
        self.pairs.swap(a, b);
        self.swap_below(2 * a + 1, 2 * b + 1);
        self.swap_below(2 * a + 2, 2 * b + 2);
    }

    /// Top `height` levels of a taller subtree.
    pub fn truncated(&self, height: usize) -> ElbeSubtree {
        assert!(height >= 1 && height <= self.height);
        ElbeSubtree {
            root: self.root,
            height,
            pairs: self.pairs[..Self::num_pairs(height)].to_vec(),
        }
    }

    /// Hangs two equal-height pair heaps below the pair `(p, q)`. Empty
    /// inputs stand for height 0.
    fn join_under(p: usize, q: usize, left: &[(usize, usize)], right: &[(usize, usize)]) -> Vec<(usize, usize)> {
        debug_assert_eq!(left.len(), right.len());
        let mut pairs = vec![(p, q)];
        let mut level = 1;
        let mut start = 0;
        while start < left.len() {
            pairs.extend_from_slice(&left[start..start + level]);
            pairs.extend_from_slice(&right[start..start + level]);
            start += level;
            level *= 2;
        }
        pairs
    }
}

#[derive(Clone, Copy)]
enum Choice {
    Pair(usize, usize),
    Child(usize),
}

/// Result of the inconsistency DP over all heights up to `max_height`.
struct DeltaTable {
    max_height: usize,
    /// `value[v][h]`: best inconsistency of a height-`h` subtree inside the
    /// subtree of `v`, or `None` when no such subtree exists.
    value: Vec<Vec<Option<f64>>>,
    choice: Vec<Vec<Option<Choice>>>,
}

impl DeltaTable {
    fn build(tree: &ScenarioTree, x: &[f64], max_height: usize) -> Self {
        let n = tree.len();
        let horizon = tree.horizon();
        let mut value = vec![vec![None; max_height + 1]; n];
        let mut choice = vec![vec![None; max_height + 1]; n];
        // best[v][s][h] = (plus, minus) where plus is the best
        // value(p, h) + x(p) over p at stage s inside T(v), minus likewise
        // with −x(p). Only heights below max_height are kept.
        type Best = Option<(f64, usize)>;
        let mut best: Vec<Vec<Vec<(Best, Best)>>> = vec![Vec::new(); n];
        let better = |cur: Best, val: f64, node: usize| match cur {
            Some((b, _)) if b >= val => cur,
            _ => Some((val, node)),
        };
        for v in (0..n).rev() {
            let sv = tree.stage(v);
            value[v][0] = Some(0.0);
            for h in 1..=max_height {
                let mut cur: Option<(f64, Choice)> = None;
                for s in sv + 1..=horizon {
                    // running maxima over the children already scanned
                    let (mut acc_plus, mut acc_minus): (Best, Best) = (None, None);
                    for &c in tree.children(v) {
                        let (cp, cm) = best[c][s - tree.stage(c)][h - 1];
                        if let (Some((a, p)), Some((b, q))) = (acc_plus, cm) {
                            let val = a + b;
                            if cur.is_none_or(|(bv, _)| val > bv) {
                                cur = Some((val, Choice::Pair(p, q)));
                            }
                        }
                        if let (Some((a, p)), Some((b, q))) = (cp, acc_minus) {
                            let val = a + b;
                            if cur.is_none_or(|(bv, _)| val > bv) {
                                cur = Some((val, Choice::Pair(p, q)));
                            }
                        }
                        if let Some((a, p)) = cp {
                            acc_plus = better(acc_plus, a, p);
                        }
                        if let Some((b, q)) = cm {
                            acc_minus = better(acc_minus, b, q);
                        }
                    }
                }
                for &c in tree.children(v) {
                    if let Some(val) = value[c][h] {
                        if cur.is_none_or(|(bv, _)| val > bv) {
                            cur = Some((val, Choice::Child(c)));
                        }
                    }
                }
                if let Some((val, ch)) = cur {
                    value[v][h] = Some(val);
                    choice[v][h] = Some(ch);
                }
            }
            // summary for v: stages sv..=horizon, heights 0..max_height
            let mut table = vec![vec![(None, None); max_height.max(1)]; horizon - sv + 1];
            for h in 0..max_height {
                if let Some(val) = value[v][h] {
                    table[0][h] = (Some((val + x[v], v)), Some((val - x[v], v)));
                }
            }
            for &c in tree.children(v) {
                let sc = tree.stage(c);
                for (i, row) in std::mem::take(&mut best[c]).into_iter().enumerate() {
                    for (h, (p, m)) in row.into_iter().enumerate() {
                        let slot = &mut table[sc - sv + i][h];
                        if let Some((a, node)) = p {
                            slot.0 = better(slot.0, a, node);
                        }
                        if let Some((b, node)) = m {
                            slot.1 = better(slot.1, b, node);
                        }
                    }
                }
            }
            best[v] = table;
        }
        Self {
            max_height,
            value,
            choice,
        }
    }

    fn witness(&self, v: usize, h: usize) -> (usize, Vec<(usize, usize)>) {
        if h == 0 {
            return (v, Vec::new());
        }
        match self.choice[v][h].expect("witness requested for an existing subtree") {
            Choice::Child(c) => self.witness(c, h),
            Choice::Pair(p, q) => {
                let (_, left) = self.witness(p, h - 1);
                let (_, right) = self.witness(q, h - 1);
                (v, ElbeSubtree::join_under(p, q, &left, &right))
            }
        }
    }
}

/// Largest total |x(u) − x(v)| over sibling pairs of any height-(K+1)
/// subtree, with a maximizing oriented witness. `None` when the tree has no
/// subtree of that height.
pub fn max_inconsistency(tree: &ScenarioTree, x: &[f64], k: usize) -> Result<Option<(f64, ElbeSubtree)>> {
    require_one_dimensional(tree)?;
    check_policy(tree, x)?;
    Ok(max_inconsistency_at(tree, x, k + 1))
}

/// Same as [`max_inconsistency`] for an arbitrary height `h ≥ 1`.
pub fn max_inconsistency_at(tree: &ScenarioTree, x: &[f64], h: usize) -> Option<(f64, ElbeSubtree)> {
    if h + 1 > tree.horizon() {
        return None;
    }
    let table = DeltaTable::build(tree, x, h);
    debug_assert_eq!(table.max_height, h);
    let val = table.value[0][h]?;
    let (root, pairs) = table.witness(0, h);
    let mut w = ElbeSubtree { root, height: h, pairs };
    w.orient(x);
    Some((val, w))
}

/// Largest inconsistency of a height-`h` subtree inside each node's
/// subtree, for all `h ≤ max_height` (`None` where no subtree exists).
pub fn inconsistency_table(tree: &ScenarioTree, x: &[f64], max_height: usize) -> Vec<Vec<Option<f64>>> {
    DeltaTable::build(tree, x, max_height).value
}

/// Heights of subtrees that can exist below each node: `h` is possible at
/// `v` when `v`'s subtree contains some height-`h` embedded subtree.
pub fn structural_heights(tree: &ScenarioTree, max_height: usize) -> Vec<Vec<bool>> {
    let zeros = vec![0.0; tree.len()];
    inconsistency_table(tree, &zeros, max_height)
        .into_iter()
        .map(|row| row.into_iter().map(|v| v.is_some()).collect())
        .collect()
}

/// Is `x` K-revisable? Decided through the inconsistency DP.
pub fn is_k_revisable(tree: &ScenarioTree, x: &[f64], k: usize) -> Result<bool> {
    binary_policy(tree, x)?;
    let threshold = ((1u64 << (k + 1).min(62)) - 2) as f64;
    Ok(match max_inconsistency(tree, x, k)? {
        None => true,
        Some((delta, _)) => delta <= threshold + 0.5,
    })
}

/// Smallest K for which `x` is K-revisable, by binary search on [0, T−1].
pub fn min_revisability(tree: &ScenarioTree, x: &[f64]) -> Result<usize> {
    binary_policy(tree, x)?;
    let (mut lo, mut hi) = (0, tree.horizon().saturating_sub(1));
    while lo < hi {
        let mid = (lo + hi) / 2;
        if is_k_revisable(tree, x, mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Tallest x-inconsistent subtree below every node, for a binary policy.
struct InconsistentHeights {
    height: Vec<usize>,
    link: Vec<Option<Choice>>,
}

impl InconsistentHeights {
    fn build(tree: &ScenarioTree, x: &[bool]) -> Self {
        let n = tree.len();
        let horizon = tree.horizon();
        let mut height = vec![0usize; n];
        let mut link: Vec<Option<Choice>> = vec![None; n];
        // reps[v][s - stage(v)][b]: some node at stage s in T(v) with
        // x = b and height equal to height[v]
        let mut reps: Vec<Vec<[Option<usize>; 2]>> = vec![Vec::new(); n];
        for v in (0..n).rev() {
            let sv = tree.stage(v);
            let kids = tree.children(v);
            let h0 = kids.iter().map(|&c| height[c]).max();
            let mut grown = None;
            if let Some(h0) = h0 {
                let tall: Vec<usize> = kids.iter().copied().filter(|&c| height[c] == h0).collect();
                'stages: for s in sv + 1..=horizon {
                    let mut seen: [Option<usize>; 2] = [None, None];
                    for &c in &tall {
                        let Some(r) = reps[c].get(s - tree.stage(c)) else {
                            continue;
                        };
                        for b in 0..2 {
                            if let (Some(p), Some(q)) = (r[b], seen[1 - b]) {
                                grown = Some((q, p));
                                break 'stages;
                            }
                        }
                        for b in 0..2 {
                            if seen[b].is_none() {
                                seen[b] = r[b];
                            }
                        }
                    }
                }
                if let Some((p, q)) = grown {
                    height[v] = h0 + 1;
                    link[v] = Some(Choice::Pair(p, q));
                } else {
                    height[v] = h0;
                    link[v] = tall.first().map(|&c| Choice::Child(c));
                }
            }
            let mut table = vec![[None, None]; horizon - sv + 1];
            table[0][usize::from(x[v])] = Some(v);
            if grown.is_none() {
                for &c in kids {
                    let from = std::mem::take(&mut reps[c]);
                    if Some(height[c]) != h0 {
                        continue;
                    }
                    let sc = tree.stage(c);
                    for (i, r) in from.into_iter().enumerate() {
                        let slot = &mut table[sc - sv + i];
                        for b in 0..2 {
                            if slot[b].is_none() {
                                slot[b] = r[b];
                            }
                        }
                    }
                }
            } else {
                for &c in kids {
                    reps[c] = Vec::new();
                }
            }
            reps[v] = table;
        }
        Self { height, link }
    }

    fn witness(&self, v: usize) -> (usize, Vec<(usize, usize)>) {
        match self.link[v] {
            None => (v, Vec::new()),
            Some(Choice::Child(c)) => self.witness(c),
            Some(Choice::Pair(p, q)) => {
                let (_, left) = self.witness(p);
                let (_, right) = self.witness(q);
                (v, ElbeSubtree::join_under(p, q, &left, &right))
            }
        }
    }
}

/// Finds an x-inconsistent subtree of height K+1 for a binary policy, or
/// `None` when `x` is K-revisable. Runs in O(|N|·T).
pub fn separate_binary_fast(tree: &ScenarioTree, x: &[f64], k: usize) -> Result<Option<ElbeSubtree>> {
    let xb = binary_policy(tree, x)?;
    let hs = InconsistentHeights::build(tree, &xb);
    if hs.height[0] < k + 1 {
        return Ok(None);
    }
    let (root, pairs) = hs.witness(0);
    let full = ElbeSubtree {
        root,
        height: hs.height[0],
        pairs,
    };
    let mut w = full.truncated(k + 1);
    w.orient(x);
    Ok(Some(w))
}

/// Height of the tallest x-inconsistent subtree (the minimum revisability
/// number of a binary policy).
pub fn tallest_inconsistent_height(tree: &ScenarioTree, x: &[f64]) -> Result<usize> {
    let xb = binary_policy(tree, x)?;
    Ok(InconsistentHeights::build(tree, &xb).height[0])
}

/// Builds a plan adjustment policy compatible with `x` that revises only
/// where `r` is set. At the root and at each revised node the plan follows
/// x down the unrevised part of the subtree and is padded with 0 below it;
/// other nodes inherit the plan of their nearest revised ancestor.
pub fn extend_policy_to_plan(tree: &ScenarioTree, x: &[f64], r: &[bool], k: usize) -> Result<PlanAdjustmentPolicy> {
    require_one_dimensional(tree)?;
    let xb = binary_policy(tree, x)?;
    if r.len() != tree.len() {
        return Err(Error::Dimension(format!(
            "revision policy has {} entries for {} nodes",
            r.len(),
            tree.len()
        )));
    }
    let n = tree.len();
    let horizon = tree.horizon();
    // anchor[v]: nearest node on the path to v (inclusive) that is the root
    // or revised
    let mut anchor = vec![0usize; n];
    for v in 1..n {
        anchor[v] = if r[v] { v } else { anchor[tree.parent(v).unwrap()] };
    }
    // per anchor, the value shared by its unrevised reach at each stage
    let mut reach: BTreeMap<usize, Vec<Option<(bool, usize)>>> = BTreeMap::new();
    for v in 0..n {
        let a = anchor[v];
        let row = reach.entry(a).or_insert_with(|| vec![None; horizon + 1]);
        let t = tree.stage(v);
        match row[t] {
            None => row[t] = Some((xb[v], v)),
            Some((val, w)) if val != xb[v] => {
                let (mu, nu) = if val { (w, v) } else { (v, w) };
                return Err(Error::Infeasible(format!(
                    "nodes {mu} and {nu} differ in x but no revision separates them"
                )));
            }
            _ => {}
        }
    }
    let worst = max_revisions_per_scenario(tree, r);
    if worst > k {
        let leaf = tree
            .leaves()
            .find(|&l| tree.path_from_root(l).iter().filter(|&&v| r[v] && v != 0).count() == worst)
            .unwrap();
        return Err(Error::Infeasible(format!(
            "scenario ending at leaf {leaf} has {worst} revisions, above K = {k}"
        )));
    }
    let plans = (0..n)
        .map(|v| {
            let row = &reach[&anchor[v]];
            (tree.stage(v)..=horizon)
                .map(|t| row[t].is_some_and(|(val, _)| val))
                .collect()
        })
        .collect();
    Ok(PlanAdjustmentPolicy { plans })
}

/// Every height-`h` subtree inside the whole tree, by exhaustive
/// enumeration. Intended for small trees.
pub fn enumerate_elbe(tree: &ScenarioTree, h: usize) -> Vec<ElbeSubtree> {
    let mut memo: HashMap<(usize, usize), Vec<Vec<(usize, usize)>>> = HashMap::new();
    let mut out = Vec::new();
    if h == 0 {
        return out;
    }
    for w in 0..tree.len() {
        for (p, q) in pairs_joined_at(tree, w) {
            for left in within(tree, p, h - 1, &mut memo) {
                for right in within(tree, q, h - 1, &mut memo) {
                    out.push(ElbeSubtree {
                        root: w,
                        height: h,
                        pairs: ElbeSubtree::join_under(p, q, &left, &right),
                    });
                }
            }
        }
    }
    out
}

fn pairs_joined_at(tree: &ScenarioTree, w: usize) -> Vec<(usize, usize)> {
    let kids = tree.children(w);
    let mut out = Vec::new();
    for (i, &a) in kids.iter().enumerate() {
        for &b in &kids[i + 1..] {
            for p in tree.descendants(a) {
                for q in tree.descendants(b) {
                    if tree.stage(p) == tree.stage(q) {
                        out.push((p, q));
                    }
                }
            }
        }
    }
    out
}

fn within(
    tree: &ScenarioTree,
    v: usize,
    h: usize,
    memo: &mut HashMap<(usize, usize), Vec<Vec<(usize, usize)>>>,
) -> Vec<Vec<(usize, usize)>> {
    if h == 0 {
        return vec![Vec::new()];
    }
    if let Some(r) = memo.get(&(v, h)) {
        return r.clone();
    }
    let mut out = Vec::new();
    for w in tree.descendants(v) {
        for (p, q) in pairs_joined_at(tree, w) {
            let lefts = within(tree, p, h - 1, memo);
            let rights = within(tree, q, h - 1, memo);
            for l in &lefts {
                for r in &rights {
                    out.push(ElbeSubtree::join_under(p, q, l, r));
                }
            }
        }
    }
    memo.insert((v, h), out.clone());
    out
}

/// JSON form of a strategic policy: `{"x": {"nodeId": value}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyJson {
    pub x: BTreeMap<String, f64>,
}

impl PolicyJson {
    pub fn from_values(x: &[f64]) -> Self {
        Self {
            x: x.iter().enumerate().map(|(v, &val)| (v.to_string(), val)).collect(),
        }
    }

    pub fn to_values(&self, tree: &ScenarioTree) -> Result<Vec<f64>> {
        let mut x = vec![None; tree.len()];
        for (k, &val) in &self.x {
            let v: usize = k.parse().map_err(|_| Error::Policy(format!("bad node id `{k}`")))?;
            tree.check(v)?;
            x[v] = Some(val);
        }
        let x: Vec<f64> = x
            .into_iter()
            .enumerate()
            .map(|(v, val)| val.ok_or_else(|| Error::Policy(format!("no value for node {v}"))))
            .collect::<Result<_>>()?;
        check_policy(tree, &x)?;
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn plan(rows: &[&[u8]]) -> PlanAdjustmentPolicy {
        PlanAdjustmentPolicy {
            plans: rows.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect(),
        }
    }

    // ids: 0 root, 1 = v1, 2 = v2, 3..6 = v3..v6
    fn left_plan() -> PlanAdjustmentPolicy {
        plan(&[&[1, 0, 1], &[0, 1], &[1, 0], &[0], &[1], &[0], &[0]])
    }

    fn right_plan() -> PlanAdjustmentPolicy {
        plan(&[&[1, 0, 1], &[0, 1], &[1, 1], &[0], &[1], &[0], &[1]])
    }

    #[test]
    fn two_policy_revisions() {
        let t = fixtures::three_stage_tree();
        let r = revision_policy_of(&t, &left_plan()).unwrap();
        assert_eq!(r, vec![false, false, true, true, false, false, false]);
        let r = revision_policy_of(&t, &right_plan()).unwrap();
        assert_eq!(r, vec![false, false, true, true, false, true, false]);
        let flat = plan(&[&[1, 1, 1], &[1, 1], &[1, 1], &[1], &[1], &[1], &[1]]);
        assert!(revision_policy_of(&t, &flat).unwrap().iter().all(|&b| !b));
        let short = plan(&[&[1, 1], &[1, 1], &[1, 1], &[1], &[1], &[1], &[1]]);
        assert!(matches!(revision_policy_of(&t, &short), Err(Error::Dimension(_))));
    }

    #[test]
    fn two_policy_compatibility() {
        let t = fixtures::three_stage_tree();
        let mut x = fixtures::left_policy();
        assert!(is_compatible(&t, &left_plan(), &x).unwrap());
        assert!(is_compatible(&t, &right_plan(), &fixtures::right_policy()).unwrap());
        x[0] = 0.0;
        assert!(!is_compatible(&t, &left_plan(), &x).unwrap());
    }

    #[test]
    fn two_policy_revisability() {
        let t = fixtures::three_stage_tree();
        let left = fixtures::left_policy();
        let right = fixtures::right_policy();
        assert!(is_k_revisable_bruteforce(&t, &left, 1).unwrap());
        assert!(!is_k_revisable_bruteforce(&t, &right, 1).unwrap());
        assert!(is_k_revisable_bruteforce(&t, &right, 2).unwrap());
        assert!(is_k_revisable(&t, &left, 1).unwrap());
        assert!(!is_k_revisable(&t, &right, 1).unwrap());
        assert!(is_k_revisable(&t, &right, 2).unwrap());
        assert_eq!(min_revisability(&t, &left).unwrap(), 1);
        assert_eq!(min_revisability(&t, &right).unwrap(), 2);
        assert_eq!(min_revisability(&t, &[1.0; 7]).unwrap(), 0);
        assert!(is_k_revisable(&t, &[1.0; 7], 0).unwrap());
    }

    #[test]
    fn right_witness_is_whole_tree() {
        let t = fixtures::three_stage_tree();
        let x = fixtures::right_policy();
        let (delta, w) = max_inconsistency(&t, &x, 1).unwrap().unwrap();
        assert_eq!(delta, 3.0);
        w.validate(&t).unwrap();
        assert_eq!(w.root, 0);
        let mut nodes = w.nodes();
        nodes.sort_unstable();
        assert_eq!(nodes, (0..7).collect::<Vec<_>>());
        assert_eq!(w.oriented_value(&x), 3.0);

        let fast = separate_binary_fast(&t, &x, 1).unwrap().unwrap();
        fast.validate(&t).unwrap();
        assert_eq!(fast.root, 0);
        assert!(fast.is_inconsistent(&x));
        assert!(separate_binary_fast(&t, &fixtures::left_policy(), 1).unwrap().is_none());
        assert!(separate_binary_fast(&t, &[0.0; 7], 0).unwrap().is_none());
    }

    #[test]
    fn tall_tree_fractional_inconsistency() {
        let t = fixtures::tall_tree(4);
        let x = fixtures::tall_tree_fractional_x(&t);
        let (delta, w) = max_inconsistency(&t, &x, 1).unwrap().unwrap();
        assert!((delta - 2.0).abs() < 1e-12);
        w.validate(&t).unwrap();
        assert!((w.inconsistency(&x) - delta).abs() < 1e-12);
    }

    #[test]
    fn no_subtree_when_too_short() {
        let t = fixtures::three_stage_tree();
        assert!(max_inconsistency(&t, &fixtures::right_policy(), 2).unwrap().is_none());
        assert!(is_k_revisable(&t, &fixtures::right_policy(), 2).unwrap());
    }

    #[test]
    fn constant_policy_has_zero_inconsistency() {
        let t = crate::tree::generate_btree(4).unwrap();
        let (delta, w) = max_inconsistency(&t, &vec![0.5; t.len()], 1).unwrap().unwrap();
        assert_eq!(delta, 0.0);
        w.validate(&t).unwrap();
    }

    #[test]
    fn bad_policies() {
        let t = fixtures::three_stage_tree();
        assert!(matches!(check_policy(&t, &[0.0; 3]), Err(Error::Dimension(_))));
        assert!(matches!(check_policy(&t, &[1.5; 7]), Err(Error::Policy(_))));
        assert!(matches!(is_k_revisable(&t, &[0.5; 7], 1), Err(Error::Policy(_))));
        let big = crate::tree::generate_btree(5).unwrap();
        assert!(matches!(
            is_k_revisable_bruteforce(&big, &vec![0.0; 31], 1),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn extension_on_small_tree() {
        let t = fixtures::three_stage_tree();
        let x = fixtures::left_policy();
        let r = vec![false, false, true, true, false, false, false];
        let pi = extend_policy_to_plan(&t, &x, &r, 1).unwrap();
        assert!(is_compatible(&t, &pi, &x).unwrap());
        let got = revision_policy_of(&t, &pi).unwrap();
        assert!(got.iter().zip(&r).all(|(&g, &want)| !g || want));

        let flat = extend_policy_to_plan(&t, &[1.0; 7], &[false; 7], 0).unwrap();
        assert!(flat.plans.iter().all(|p| p.iter().all(|&b| b)));

        let err = extend_policy_to_plan(&t, &x, &[false; 7], 1).unwrap_err();
        assert!(err.to_string().contains("no revision separates"), "{err}");
        let r_right = vec![false, false, true, true, false, true, false];
        let err = extend_policy_to_plan(&t, &fixtures::right_policy(), &r_right, 1).unwrap_err();
        assert!(err.to_string().contains("leaf 5"), "{err}");
    }

    #[test]
    fn enumeration_counts_small_tree() {
        let t = fixtures::three_stage_tree();
        // height 1: all unordered same-stage pairs (1 + 6 = 7)
        assert_eq!(enumerate_elbe(&t, 1).len(), 7);
        // height 2: only the tree itself
        assert_eq!(enumerate_elbe(&t, 2).len(), 1);
        for s in enumerate_elbe(&t, 1).iter().chain(&enumerate_elbe(&t, 2)) {
            s.validate(&t).unwrap();
        }
    }

    #[test]
    fn policy_json() {
        let t = fixtures::three_stage_tree();
        let x = fixtures::left_policy();
        let j = PolicyJson::from_values(&x);
        assert_eq!(j.to_values(&t).unwrap(), x);
        let mut missing = j.clone();
        missing.x.remove("3");
        assert!(missing.to_values(&t).is_err());
    }
}
