use krevise::base_problems::{build_lot_sizing, generate_lot_sizing, hypercube_model};
use krevise::formulations::{
    attach_revision, cut_loop_st, CutMode, FormulationKind, RevisionFormulationSpec, CUT_ROUNDS,
};
use krevise::hypercube::{random_objective, solve_dp, HypercubeInstance};
use krevise::tree::{generate_btree, random_tree};
use krevise_milp::{Backend, Embedded, Status};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;

const COMPACT: [FormulationKind; 5] = [
    FormulationKind::Cp,
    FormulationKind::CpPlus,
    FormulationKind::CpPlusPlus,
    FormulationKind::Stdp,
    FormulationKind::Path,
];

fn instance(seed: u64, stages: usize) -> HypercubeInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = if seed.is_multiple_of(3) {
        generate_btree(stages).unwrap()
    } else {
        random_tree(&mut rng, stages, 10)
    };
    let c = random_objective(&tree, &mut rng, -10, 10);
    HypercubeInstance::new(tree, c).unwrap()
}

fn solve(model: &krevise_milp::Model, relax: bool) -> f64 {
    let res = Embedded::default().solve(model, relax).unwrap();
    assert_eq!(res.status, Status::Optimal);
    res.objective
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_formulation_reaches_the_dp_value(seed in any::<u64>(), stages in 2usize..5) {
        let inst = instance(seed, stages);
        let base = hypercube_model(&inst).unwrap();
        for k in 0..inst.tree.horizon() {
            let z = solve_dp(&inst, k).unwrap().value;
            let mut lp = Vec::new();
            for kind in COMPACT {
                let m = attach_revision(&base, &inst.tree, &RevisionFormulationSpec::new(kind, k)).unwrap();
                let ip = solve(&m, false);
                prop_assert!((ip - z).abs() < TOL, "{} K={k}: {ip} vs {z}", kind.name());
                let r = solve(&m, true);
                prop_assert!(r >= z - TOL, "{} K={k}: LP {r} below {z}", kind.name());
                lp.push(r);
            }
            // CP+ keeps the relaxation of CP, CP++ tightens CP+
            prop_assert!((lp[0] - lp[1]).abs() < TOL, "K={k}: CP {} CP+ {}", lp[0], lp[1]);
            prop_assert!(lp[2] <= lp[1] + TOL);
            let cut = cut_loop_st(&base, &inst.tree, k, &Embedded::default(), CutMode::Mip, CUT_ROUNDS).unwrap();
            prop_assert!((cut.result.objective - z).abs() < TOL, "st K={k}");
        }
    }

    #[test]
    fn lot_sizing_cost_falls_with_budget(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree(&mut rng, 3, 8);
        let inst = generate_lot_sizing(&tree, seed);
        let base = build_lot_sizing(&inst).unwrap();
        let full = solve(&base, false);
        let mut prev = f64::INFINITY;
        for k in 0..tree.horizon() {
            let m = attach_revision(&base, &tree, &RevisionFormulationSpec::new(FormulationKind::CpPlus, k)).unwrap();
            let z = solve(&m, false);
            prop_assert!(z <= prev + TOL && z >= full - TOL);
            prev = z;
        }
        prop_assert!((prev - full).abs() < TOL * full.abs().max(1.0));
    }
}
