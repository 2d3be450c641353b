//! The K-revision hypercube problem: maximize c·x over K-revisable binary
//! policies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulations::{pa_groups, stage_subsets};
use crate::revision::{is_k_revisable_bruteforce, PlanAdjustmentPolicy};
use crate::tree::{ScenarioTree, TreeJson};

/// Largest horizon the plan-suffix DP accepts.
pub const DP_STAGE_CAP: usize = 22;
/// Largest node count for exhaustive policy enumeration.
pub const BRUTEFORCE_NODE_CAP: usize = 18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceJson", try_from = "InstanceJson")]
pub struct HypercubeInstance {
    pub tree: ScenarioTree,
    /// `c[v]` has one entry per strategic coordinate of `v`'s stage.
    pub c: Vec<Vec<f64>>,
}

impl HypercubeInstance {
    pub fn new(tree: ScenarioTree, c: Vec<Vec<f64>>) -> Result<Self> {
        let inst = Self { tree, c };
        inst.check()?;
        Ok(inst)
    }

    /// One objective entry per node on a tree of dimension 1.
    pub fn from_scalar(tree: ScenarioTree, c: Vec<f64>) -> Result<Self> {
        Self::new(tree, c.into_iter().map(|v| vec![v]).collect())
    }

    fn check(&self) -> Result<()> {
        if self.c.len() != self.tree.len() {
            return Err(Error::Dimension(format!(
                "{} objective vectors for {} nodes",
                self.c.len(),
                self.tree.len()
            )));
        }
        for (v, cv) in self.c.iter().enumerate() {
            let d = self.tree.strategic_dim(self.tree.stage(v));
            if cv.len() != d {
                return Err(Error::Dimension(format!(
                    "node {v} has {} objective entries, its stage has dimension {d}",
                    cv.len()
                )));
            }
        }
        Ok(())
    }

    /// Objective as one value per node (dimension 1 only).
    pub fn scalar_c(&self) -> Result<Vec<f64>> {
        if !self.tree.is_one_dimensional() {
            return Err(Error::Precondition(
                "strategic dimension must be 1 at every stage; split the instance first".into(),
            ));
        }
        Ok(self.c.iter().map(|cv| cv[0]).collect())
    }

    /// Equivalent instance of dimension 1; see
    /// [`ScenarioTree::split_multidim`].
    pub fn split(&self) -> (HypercubeInstance, Vec<(usize, usize)>) {
        let (tree, corr) = self.tree.split_multidim();
        let c = corr.iter().map(|&(v, i)| vec![self.c[v][i]]).collect();
        (HypercubeInstance { tree, c }, corr)
    }

    /// Value of full adaptivity: the sum of the positive objective entries.
    pub fn z_ms(&self) -> f64 {
        self.c.iter().flatten().map(|&v| v.max(0.0)).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl From<HypercubeInstance> for InstanceJson {
    fn from(inst: HypercubeInstance) -> Self {
        InstanceJson {
            tree: TreeJson::from(&inst.tree),
            c: inst
                .c
                .into_iter()
                .enumerate()
                .map(|(v, cv)| (v.to_string(), cv))
                .collect(),
        }
    }
}

impl TryFrom<InstanceJson> for HypercubeInstance {
    type Error = Error;

    fn try_from(j: InstanceJson) -> Result<Self> {
        let tree: ScenarioTree = j.tree.try_into()?;
        let mut c = vec![None; tree.len()];
        for (k, cv) in j.c {
            let v: usize = k
                .parse()
                .map_err(|_| Error::Dimension(format!("bad node id `{k}` in c")))?;
            tree.check(v)?;
            c[v] = Some(cv);
        }
        let c = c
            .into_iter()
            .enumerate()
            .map(|(v, cv)| cv.ok_or_else(|| Error::Dimension(format!("no objective for node {v}"))))
            .collect::<Result<_>>()?;
        Self::new(tree, c)
    }
}

/// Best value when decisions may differ only at `k` adaptive stages,
/// with the maximizing stage set.
pub fn solve_partially_adaptive(inst: &HypercubeInstance, k: usize) -> Result<(f64, BTreeSet<usize>)> {
    let mut best: Option<(f64, BTreeSet<usize>)> = None;
    for stages in stage_subsets(inst.tree.horizon(), k)? {
        let mut value = 0.0;
        for group in pa_groups(&inst.tree, &stages) {
            let d = inst.c[group[0]].len();
            for i in 0..d {
                value += group.iter().map(|&v| inst.c[v][i]).sum::<f64>().max(0.0);
            }
        }
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, stages));
        }
    }
    Ok(best.expect("at least one stage set"))
}

/// JSON form: `{"tree": {...}, "c": {"nodeId": [floats]}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceJson {
    pub tree: TreeJson,
    pub c: BTreeMap<String, Vec<f64>>,
}

/// Optimal value with a policy and a plan adjustment policy certifying it.
#[derive(Debug, Clone, PartialEq)]
pub struct HcSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub plan: PlanAdjustmentPolicy,
}

/// Value of a subtree paired with the number of revisions used to reach it;
/// among equal values fewer revisions rank higher.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Score {
    value: f64,
    revisions: u32,
}

impl Score {
    const NONE: Score = Score {
        value: f64::NEG_INFINITY,
        revisions: 0,
    };

    fn beats(self, other: Score) -> bool {
        self.value > other.value || (self.value == other.value && self.revisions < other.revisions)
    }

    fn add(self, other: Score) -> Score {
        Score {
            value: self.value + other.value,
            revisions: self.revisions + other.revisions,
        }
    }
}

fn argmax(row: &[Score]) -> usize {
    let mut bi = 0;
    for (i, &s) in row.iter().enumerate() {
        if s.beats(row[bi]) {
            bi = i;
        }
    }
    bi
}

/// Exact DP over plan suffixes. `g[v][k][plan]` is the best value of the
/// subtree of `v` when `v` holds `plan` with `k` revisions left below it.
/// Among optimal policies the one with fewest revised nodes is returned.
pub fn solve_dp(inst: &HypercubeInstance, k: usize) -> Result<HcSolution> {
    let c = inst.scalar_c()?;
    let tree = &inst.tree;
    let horizon = tree.horizon();
    if horizon > DP_STAGE_CAP {
        return Err(Error::TooLarge {
            what: "horizon for the hypercube DP",
            limit: DP_STAGE_CAP,
            got: horizon,
        });
    }
    let k = k.min(horizon - 1);
    let n = tree.len();
    let mut g: Vec<Vec<Vec<Score>>> = vec![Vec::new(); n];
    // best[v][k]: best fresh plan at v, counting v's own revision
    let mut best: Vec<Vec<Score>> = vec![Vec::new(); n];
    for v in (0..n).rev() {
        let len = horizon - tree.stage(v) + 1;
        let mut table = vec![vec![Score::NONE; 1 << len]; k + 1];
        for (kk, row) in table.iter_mut().enumerate() {
            for (plan, slot) in row.iter_mut().enumerate() {
                let own = if plan & 1 == 1 { c[v] } else { 0.0 };
                let mut acc = Score {
                    value: own,
                    revisions: 0,
                };
                for &u in tree.children(v) {
                    let keep = g[u][kk][plan >> 1];
                    let pick = if kk >= 1 && best[u][kk - 1].beats(keep) {
                        best[u][kk - 1]
                    } else {
                        keep
                    };
                    acc = acc.add(pick);
                }
                *slot = acc;
            }
        }
        best[v] = table
            .iter()
            .map(|row| {
                let s = row[argmax(row)];
                Score {
                    value: s.value,
                    revisions: s.revisions + 1,
                }
            })
            .collect();
        g[v] = table;
    }

    let mut plan_mask = vec![0usize; n];
    let mut left = vec![0usize; n];
    plan_mask[0] = argmax(&g[0][k]);
    left[0] = k;
    for v in 1..n {
        let p = tree.parent(v).unwrap();
        let kk = left[p];
        let inherited = plan_mask[p] >> 1;
        if kk >= 1 && best[v][kk - 1].beats(g[v][kk][inherited]) {
            left[v] = kk - 1;
            plan_mask[v] = argmax(&g[v][kk - 1]);
        } else {
            left[v] = kk;
            plan_mask[v] = inherited;
        }
    }
    let plans = (0..n)
        .map(|v| {
            let len = horizon - tree.stage(v) + 1;
            (0..len).map(|i| (plan_mask[v] >> i) & 1 == 1).collect()
        })
        .collect();
    let x = plan_mask.iter().map(|&m| (m & 1) as f64).collect();
    Ok(HcSolution {
        value: g[0][k][plan_mask[0]].value,
        x,
        plan: PlanAdjustmentPolicy { plans },
    })
}

/// Maximum of c·x over all K-revisable binary policies, by enumeration with
/// the exhaustive plan search as the feasibility test.
pub fn solve_bruteforce(inst: &HypercubeInstance, k: usize) -> Result<f64> {
    let c = inst.scalar_c()?;
    let n = inst.tree.len();
    if n > BRUTEFORCE_NODE_CAP {
        return Err(Error::TooLarge {
            what: "node count for policy enumeration",
            limit: BRUTEFORCE_NODE_CAP,
            got: n,
        });
    }
    let mut best = f64::NEG_INFINITY;
    let mut x = vec![0.0; n];
    for mask in 0u32..(1 << n) {
        let mut val = 0.0;
        for v in 0..n {
            let on = (mask >> v) & 1 == 1;
            x[v] = if on { 1.0 } else { 0.0 };
            if on {
                val += c[v];
            }
        }
        if val > best && is_k_revisable_bruteforce(&inst.tree, &x, k)? {
            best = val;
        }
    }
    Ok(best)
}

/// Hard instance built from a digraph on `num_vertices` vertices: one
/// stage-2 node per arc (i, j) with objective e_i − e_j over a stage of
/// dimension |V|, each followed by leaves worth +1 and −1.
pub fn dicut_instance(num_vertices: usize, arcs: &[(usize, usize)]) -> Result<HypercubeInstance> {
    if num_vertices == 0 || arcs.is_empty() {
        return Err(Error::Precondition("the graph needs a vertex and an arc".into()));
    }
    let mut seen = BTreeSet::new();
    for &(i, j) in arcs {
        if i >= num_vertices || j >= num_vertices {
            return Err(Error::Precondition(format!("arc ({i}, {j}) leaves the vertex set")));
        }
        if i == j {
            return Err(Error::Precondition(format!("self-loop at vertex {i}")));
        }
        if !seen.insert((i, j)) {
            return Err(Error::Precondition(format!("duplicate arc ({i}, {j})")));
        }
    }
    let m = arcs.len();
    let mut parents = vec![None];
    parents.extend((0..m).map(|_| Some(0)));
    for a in 0..m {
        parents.push(Some(1 + a));
        parents.push(Some(1 + a));
    }
    let tree = ScenarioTree::from_parents(&parents, None, Some(vec![1, num_vertices, 1]))?;
    let mut c = vec![vec![0.0]];
    for &(i, j) in arcs {
        let mut cv = vec![0.0; num_vertices];
        cv[i] = 1.0;
        cv[j] = -1.0;
        c.push(cv);
    }
    for _ in 0..m {
        c.push(vec![1.0]);
        c.push(vec![-1.0]);
    }
    HypercubeInstance::new(tree, c)
}

/// Largest number of arcs leaving a vertex subset, by enumerating subsets.
pub fn max_dicut(num_vertices: usize, arcs: &[(usize, usize)]) -> usize {
    (0u64..(1 << num_vertices))
        .map(|s| {
            arcs.iter()
                .filter(|&&(i, j)| (s >> i) & 1 == 1 && (s >> j) & 1 == 0)
                .count()
        })
        .max()
        .unwrap_or(0)
}

/// Gives every leaf two new children worth +M and −M with
/// M = 1 + Σ|c|. The optimum for budget K + 1 on the result exceeds the
/// optimum for K on the input by exactly (#leaves)·M.
pub fn lift_instance(inst: &HypercubeInstance) -> Result<(HypercubeInstance, f64)> {
    let big_m = 1.0 + inst.c.iter().flatten().map(|v| v.abs()).sum::<f64>();
    let tree = &inst.tree;
    let mut parents = tree.parents().to_vec();
    let mut c = inst.c.clone();
    for leaf in tree.leaves().collect::<Vec<_>>() {
        parents.push(Some(leaf));
        parents.push(Some(leaf));
        c.push(vec![big_m]);
        c.push(vec![-big_m]);
    }
    let mut dims = tree.strategic_dims().to_vec();
    dims.push(1);
    let lifted = ScenarioTree::from_parents(&parents, None, Some(dims))?;
    // keep leaf probabilities proportional to the original ones
    let probs: BTreeMap<usize, f64> = lifted
        .leaves()
        .map(|l| (l, tree.leaf_prob(lifted.parent(l).unwrap()) / 2.0))
        .collect();
    let lifted = ScenarioTree::from_parents(lifted.parents(), Some(&probs), Some(lifted.strategic_dims().to_vec()))?;
    let (lifted, order) = lifted.bfs_relabel();
    let c = order.iter().map(|&old| c[old].clone()).collect();
    Ok((HypercubeInstance::new(lifted, c)?, big_m))
}

/// Appends a chain of `extra` zero-objective nodes below every leaf.
pub fn pad_instance(inst: &HypercubeInstance, extra: usize) -> Result<HypercubeInstance> {
    let tree = &inst.tree;
    let mut parents = tree.parents().to_vec();
    let mut c = inst.c.clone();
    let mut probs = BTreeMap::new();
    for leaf in tree.leaves().collect::<Vec<_>>() {
        let mut last = leaf;
        for _ in 0..extra {
            parents.push(Some(last));
            c.push(vec![0.0]);
            last = parents.len() - 1;
        }
        probs.insert(last, tree.leaf_prob(leaf));
    }
    let mut dims = tree.strategic_dims().to_vec();
    dims.extend(std::iter::repeat_n(1, extra));
    let padded = ScenarioTree::from_parents(&parents, Some(&probs), Some(dims))?;
    let (padded, order) = padded.bfs_relabel();
    let c = order.iter().map(|&old| c[old].clone()).collect();
    HypercubeInstance::new(padded, c)
}

/// Random integer objective in [lo, hi] on every node.
pub fn random_objective(tree: &ScenarioTree, rng: &mut impl rand::Rng, lo: i32, hi: i32) -> Vec<Vec<f64>> {
    (0..tree.len())
        .map(|v| {
            (0..tree.strategic_dim(tree.stage(v)))
                .map(|_| f64::from(rng.random_range(lo..=hi)))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::revision::{is_compatible, max_revisions_per_scenario, revision_policy_of};
    use crate::tree::generate_btree;

    fn certify(inst: &HypercubeInstance, k: usize, sol: &HcSolution) {
        let c = inst.scalar_c().unwrap();
        assert!(is_compatible(&inst.tree, &sol.plan, &sol.x).unwrap());
        let r = revision_policy_of(&inst.tree, &sol.plan).unwrap();
        assert!(max_revisions_per_scenario(&inst.tree, &r) <= k);
        let val: f64 = c.iter().zip(&sol.x).map(|(a, b)| a * b).sum();
        assert_eq!(val, sol.value);
    }

    #[test]
    fn tall_tree_value() {
        for depth in [4, 5] {
            let t = fixtures::tall_tree(depth);
            let c = fixtures::tall_tree_objective(&t);
            let inst = HypercubeInstance::from_scalar(t, c).unwrap();
            let sol = solve_dp(&inst, 1).unwrap();
            assert_eq!(sol.value, f64::from((1u32 << depth) - 1));
            certify(&inst, 1, &sol);
            assert_eq!(inst.z_ms(), f64::from(depth as u32 * (1 << (depth - 1))));
        }
    }

    #[test]
    fn nonnegative_objective_takes_everything() {
        let t = generate_btree(4).unwrap();
        let n = t.len();
        let inst = HypercubeInstance::from_scalar(t, (0..n).map(|v| (1 + v % 3) as f64).collect()).unwrap();
        let sol = solve_dp(&inst, 1).unwrap();
        assert_eq!(sol.value, inst.z_ms());
        assert!(sol.x.iter().all(|&v| v == 1.0));
        let r = revision_policy_of(&inst.tree, &sol.plan).unwrap();
        assert!(r.iter().all(|&b| !b));
    }

    #[test]
    fn small_tree_bruteforce() {
        let t = fixtures::three_stage_tree();
        let inst = HypercubeInstance::from_scalar(t, fixtures::left_objective()).unwrap();
        // the left policy is 1-revisable and collects every +1
        assert_eq!(solve_bruteforce(&inst, 1).unwrap(), 3.0);
        assert_eq!(solve_dp(&inst, 1).unwrap().value, 3.0);
        assert_eq!(solve_bruteforce(&inst, 2).unwrap(), inst.z_ms());
    }

    #[test]
    fn dicut_reduction() {
        let (nv, arcs) = fixtures::dicut_graph();
        let inst = dicut_instance(nv, &arcs).unwrap();
        assert_eq!(inst.c[1], vec![1.0, -1.0, 0.0]);
        assert_eq!(inst.c[2], vec![0.0, 1.0, -1.0]);
        assert_eq!(inst.c[3], vec![0.0, -1.0, 1.0]);
        assert_eq!(max_dicut(nv, &arcs), 2);
        let (split, _) = inst.split();
        assert_eq!(solve_dp(&split, 1).unwrap().value, 5.0);
        assert_eq!(solve_bruteforce(&split, 1).unwrap(), 5.0);

        let single = dicut_instance(2, &[(0, 1)]).unwrap().split().0;
        assert_eq!(solve_dp(&single, 1).unwrap().value, 2.0);
        assert!(dicut_instance(2, &[(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn lifting_and_padding() {
        let (nv, arcs) = fixtures::dicut_graph();
        let base = dicut_instance(nv, &arcs).unwrap().split().0;
        let (lifted, big_m) = lift_instance(&base).unwrap();
        assert_eq!(big_m, 13.0);
        let leaves = base.tree.num_scenarios() as f64;
        assert_eq!(solve_dp(&lifted, 2).unwrap().value - leaves * big_m, 5.0);
        assert!(lifted.tree.validate().is_ok());

        let padded = pad_instance(&base, 2).unwrap();
        assert_eq!(padded.tree.horizon(), base.tree.horizon() + 2);
        assert_eq!(solve_dp(&padded, 1).unwrap().value, 5.0);

        let zeros = HypercubeInstance::from_scalar(fixtures::three_stage_tree(), vec![0.0; 7]).unwrap();
        let (lz, m) = lift_instance(&zeros).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(solve_dp(&lz, 1).unwrap().value, 4.0);
    }

    #[test]
    fn json_roundtrip() {
        let (nv, arcs) = fixtures::dicut_graph();
        let inst = dicut_instance(nv, &arcs).unwrap();
        let back = HypercubeInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back.c, inst.c);
        assert_eq!(back.tree.parents(), inst.tree.parents());
    }

    #[test]
    fn partially_adaptive_values() {
        let t = fixtures::three_stage_tree();
        let inst = HypercubeInstance::from_scalar(t, fixtures::signed_objective()).unwrap();
        // no adaptation: stage sums 0, 0 and 0
        assert_eq!(solve_partially_adaptive(&inst, 0).unwrap().0, 0.0);
        let (z2, _) = solve_partially_adaptive(&inst, 2).unwrap();
        assert_eq!(z2, 3.0);
        for k in 0..3 {
            assert!(solve_partially_adaptive(&inst, k).unwrap().0 <= solve_dp(&inst, k).unwrap().value);
        }
        assert_eq!(solve_partially_adaptive(&inst, 3).unwrap().0, inst.z_ms());
    }

    #[test]
    fn dimension_errors() {
        let t = fixtures::three_stage_tree();
        assert!(matches!(
            HypercubeInstance::from_scalar(t.clone(), vec![0.0; 3]),
            Err(Error::Dimension(_))
        ));
        let (nv, arcs) = fixtures::dicut_graph();
        let multi = dicut_instance(nv, &arcs).unwrap();
        assert!(matches!(solve_dp(&multi, 1), Err(Error::Precondition(_))));
    }
}
