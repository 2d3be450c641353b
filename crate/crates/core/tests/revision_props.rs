use krevise::revision::{
    enumerate_elbe, extend_policy_to_plan, is_compatible, is_k_revisable, is_k_revisable_bruteforce, max_inconsistency,
    max_revisions_per_scenario, min_revisability, revision_policy_of, separate_binary_fast,
    tallest_inconsistent_height,
};
use krevise::tree::{enumerate_trees, random_tree};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tree_from(seed: u64, stages: usize, max_nodes: usize) -> krevise::ScenarioTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_tree(&mut rng, stages, max_nodes)
}

fn bits(n: usize, mask: u64) -> Vec<f64> {
    (0..n).map(|v| ((mask >> v) & 1) as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn three_checks_agree(seed in any::<u64>(), stages in 1usize..5, mask in any::<u64>()) {
        let t = tree_from(seed, stages, 12);
        let x = bits(t.len(), mask);
        let mut previous = false;
        for k in 0..t.horizon() {
            let brute = is_k_revisable_bruteforce(&t, &x, k).unwrap();
            let dp = is_k_revisable(&t, &x, k).unwrap();
            let fast = separate_binary_fast(&t, &x, k).unwrap();
            prop_assert_eq!(brute, dp, "k = {}", k);
            prop_assert_eq!(brute, fast.is_none(), "k = {}", k);
            if let Some(w) = fast {
                w.validate(&t).unwrap();
                prop_assert!(w.is_inconsistent(&x));
                prop_assert_eq!(w.height, k + 1);
            }
            prop_assert!(!previous || dp, "monotone in K");
            previous = dp;
        }
        prop_assert!(previous, "always revisable at K = T - 1");
        let m = min_revisability(&t, &x).unwrap();
        prop_assert_eq!(m, tallest_inconsistent_height(&t, &x).unwrap());
    }

    #[test]
    fn dp_matches_enumeration(seed in any::<u64>(), stages in 2usize..5, vals in prop::collection::vec(0.0f64..=1.0, 12)) {
        let t = tree_from(seed, stages, 12);
        let x: Vec<f64> = vals[..t.len()].to_vec();
        for k in 0..t.horizon() - 1 {
            let all = enumerate_elbe(&t, k + 1);
            let best = all.iter().map(|s| s.inconsistency(&x)).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
            let got = max_inconsistency(&t, &x, k).unwrap();
            match (best, got) {
                (None, None) => {}
                (Some(b), Some((d, w))) => {
                    prop_assert!((b - d).abs() < 1e-9, "k = {}: {} vs {}", k, b, d);
                    w.validate(&t).unwrap();
                    prop_assert!((w.inconsistency(&x) - d).abs() < 1e-9);
                    prop_assert!((w.oriented_value(&x) - d).abs() < 1e-9);
                }
                (b, g) => prop_assert!(false, "existence differs: {:?} vs {:?}", b, g.map(|g| g.0)),
            }
        }
    }

    #[test]
    fn binary_saturation(seed in any::<u64>(), stages in 2usize..5, mask in any::<u64>()) {
        let t = tree_from(seed, stages, 12);
        let x = bits(t.len(), mask);
        for k in 0..t.horizon() - 1 {
            if let Some((d, _)) = max_inconsistency(&t, &x, k).unwrap() {
                let full = ((1u64 << (k + 1)) - 1) as f64;
                prop_assert_eq!(d == full, separate_binary_fast(&t, &x, k).unwrap().is_some());
            }
        }
    }

    #[test]
    fn extension_respects_revisions(seed in any::<u64>(), stages in 1usize..5, xm in any::<u64>(), rm in any::<u64>(), k in 0usize..4) {
        let t = tree_from(seed, stages, 12);
        let x = bits(t.len(), xm);
        let mut r: Vec<bool> = (0..t.len()).map(|v| (rm >> v) & 1 == 1).collect();
        r[0] = false;
        if let Ok(pi) = extend_policy_to_plan(&t, &x, &r, k) {
            prop_assert!(is_compatible(&t, &pi, &x).unwrap());
            let got = revision_policy_of(&t, &pi).unwrap();
            prop_assert!(got.iter().zip(&r).all(|(&g, &w)| !g || w));
            prop_assert!(max_revisions_per_scenario(&t, &got) <= k);
        }
    }
}

#[test]
fn exhaustive_small_trees() {
    let mut checked = 0;
    for t in enumerate_trees(9, 4) {
        let n = t.len();
        for mask in 0u64..(1 << n) {
            let x = bits(n, mask);
            for k in 0..t.horizon() {
                let brute = is_k_revisable_bruteforce(&t, &x, k).unwrap();
                assert_eq!(brute, is_k_revisable(&t, &x, k).unwrap());
                assert_eq!(brute, separate_binary_fast(&t, &x, k).unwrap().is_none());
                checked += 1;
            }
        }
    }
    assert!(checked > 10_000);
}
