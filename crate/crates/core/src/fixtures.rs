//! Small hand-built trees and points used across tests, the acceptance
//! suite and the CLI examples.

use crate::tree::{generate_btree, ScenarioTree};

/// Three-stage binary tree. Ids: 0 root, 1 and 2 at stage 2, 3 and 4 below
/// node 1, 5 and 6 below node 2.
pub fn three_stage_tree() -> ScenarioTree {
    generate_btree(3).expect("3 stages is within the cap")
}

/// 1-revisable policy: ones at 0, 2 and 4.
pub fn left_policy() -> Vec<f64> {
    vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]
}

/// Policy with minimum revisability 2: ones at 0, 2, 4 and 6.
pub fn right_policy() -> Vec<f64> {
    vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]
}

/// Objective that rewards the ones of [`right_policy`] below the root and
/// penalises its zeros.
pub fn signed_objective() -> Vec<f64> {
    vec![0.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0]
}

/// Objective rewarding exactly the ones of [`left_policy`].
pub fn left_objective() -> Vec<f64> {
    vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, -1.0]
}

/// Fractional point of the compact formulation on the three-stage tree for
/// K = 1.
pub struct CompactPoint {
    pub x: Vec<f64>,
    /// Revision variables, one per node.
    pub r: Vec<f64>,
    /// `pi[v][i]` for stage `stage(v) + i`.
    pub pi: Vec<Vec<f64>>,
}

pub fn fractional_compact_point() -> CompactPoint {
    let x = right_policy();
    let pi = vec![
        vec![1.0, 0.5, 0.5],
        vec![0.0, 0.5],
        vec![1.0, 0.5],
        vec![x[3]],
        vec![x[4]],
        vec![x[5]],
        vec![x[6]],
    ];
    CompactPoint {
        x,
        r: vec![0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
        pi,
    }
}

/// Four-stage tree with three stage-2 branches, each continuing through a
/// single stage-3 node to two leaves. Ids: 1..=3 stage 2, 4..=6 stage 3,
/// leaves 7..=12.
pub fn three_branch_tree() -> ScenarioTree {
    let parents = [
        None,
        Some(0),
        Some(0),
        Some(0),
        Some(1),
        Some(2),
        Some(3),
        Some(4),
        Some(4),
        Some(5),
        Some(5),
        Some(6),
        Some(6),
    ];
    ScenarioTree::from_parents(&parents, None, None).expect("valid parent array")
}

/// Fractional vertex of the subtree relaxation for K = 1 on
/// [`three_branch_tree`].
pub fn three_branch_fractional_x() -> Vec<f64> {
    vec![
        0.0, //
        0.0, 1.0, 0.5, //
        1.0, 1.0, 0.5, //
        0.0, 0.5, 0.0, 0.5, 0.0, 1.0,
    ]
}

/// Perfect binary tree of depth `depth` (so `depth + 1` stages).
pub fn tall_tree(depth: usize) -> ScenarioTree {
    generate_btree(depth + 1).expect("depth within the B-tree cap")
}

/// Root 0; in every sibling pair at depth d the second child gets
/// +2^(depth−d) and the first −2^(depth−d).
pub fn tall_tree_objective(tree: &ScenarioTree) -> Vec<f64> {
    let depth = tree.horizon() - 1;
    (0..tree.len())
        .map(|v| {
            if v == 0 {
                return 0.0;
            }
            let d = tree.stage(v) - 1;
            let mag = f64::from(1u32 << (depth - d));
            if v % 2 == 0 {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// 2/3 on every node with a positive objective, 0 elsewhere.
pub fn tall_tree_fractional_x(tree: &ScenarioTree) -> Vec<f64> {
    tall_tree_objective(tree)
        .into_iter()
        .map(|c| if c > 0.0 { 2.0 / 3.0 } else { 0.0 })
        .collect()
}

/// Digraph on three vertices with arcs 0→1, 1→2 and 2→1.
pub fn dicut_graph() -> (usize, Vec<(usize, usize)>) {
    (3, vec![(0, 1), (1, 2), (2, 1)])
}
