use krevise_milp::{read_mps, solve_lp, solve_mip, write_mps, MipOptions, Model, ObjSense, RowSense, Status, VarKind};
use proptest::prelude::*;

fn kind_of(k: u8) -> VarKind {
    match k % 3 {
        0 => VarKind::Binary,
        1 => VarKind::Integer,
        _ => VarKind::Continuous,
    }
}

prop_compose! {
    fn arb_model()(
        vars in prop::collection::vec((0u8..3, -5i32..5, 0i32..6, any::<bool>()), 0..8),
        rows in prop::collection::vec((prop::collection::vec(-1e3f64..1e3, 8), 0u8..3, -1e4f64..1e4), 0..6),
        obj in prop::collection::vec(-50.0f64..50.0, 8),
        constant in -10.0f64..10.0,
        maximize in any::<bool>(),
    ) -> Model {
        let mut m = Model::new("random");
        for (j, (k, lo, width, inf)) in vars.iter().enumerate() {
            let kind = kind_of(*k);
            let (lo, up) = match kind {
                VarKind::Binary => (0.0, 1.0),
                _ if *inf => (f64::from(*lo), f64::INFINITY),
                _ => (f64::from(*lo), f64::from(lo + width)),
            };
            m.add_var(format!("v{j}"), kind, lo, up).unwrap();
        }
        let n = m.num_vars();
        for (i, (coefs, s, rhs)) in rows.iter().enumerate() {
            let sense = [RowSense::Le, RowSense::Ge, RowSense::Eq][*s as usize];
            let terms: Vec<(usize, f64)> = (0..n).filter(|j| (i + j) % 3 != 0).map(|j| (j, coefs[j])).collect();
            m.add_constraint(format!("r{i}"), terms, sense, *rhs).unwrap();
        }
        let sense = if maximize { ObjSense::Maximize } else { ObjSense::Minimize };
        m.set_objective(sense, (0..n).map(|j| (j, obj[j])), constant);
        m
    }
}

proptest! {
    #[test]
    fn mps_roundtrip_is_identity(m in arb_model()) {
        let text = write_mps(&m).unwrap();
        let back = read_mps(&text).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn lp_strong_duality(
        a in prop::collection::vec(prop::collection::vec(0i32..10, 4), 1..5),
        b in prop::collection::vec(1i32..30, 5),
        c in prop::collection::vec(-5i32..10, 4),
    ) {
        // primal: max c x, A x <= b, 0 <= x <= 3
        // dual:   min b y + 3 sum z, A^T y + z >= c, y, z >= 0
        let (m_rows, n) = (a.len(), 4);
        let mut p = Model::new("primal");
        for j in 0..n {
            p.add_continuous(format!("x{j}"), 0.0, 3.0).unwrap();
        }
        for i in 0..m_rows {
            p.add_constraint(format!("r{i}"), (0..n).map(|j| (j, f64::from(a[i][j]))), RowSense::Le, f64::from(b[i])).unwrap();
        }
        p.set_objective(ObjSense::Maximize, (0..n).map(|j| (j, f64::from(c[j]))), 0.0);

        let mut d = Model::new("dual");
        for i in 0..m_rows {
            d.add_continuous(format!("y{i}"), 0.0, f64::INFINITY).unwrap();
        }
        for j in 0..n {
            d.add_continuous(format!("z{j}"), 0.0, f64::INFINITY).unwrap();
        }
        for j in 0..n {
            let mut terms: Vec<(usize, f64)> = (0..m_rows).map(|i| (i, f64::from(a[i][j]))).collect();
            terms.push((m_rows + j, 1.0));
            d.add_constraint(format!("c{j}"), terms, RowSense::Ge, f64::from(c[j])).unwrap();
        }
        d.set_objective(
            ObjSense::Minimize,
            (0..m_rows).map(|i| (i, f64::from(b[i]))).chain((0..n).map(|j| (m_rows + j, 3.0))),
            0.0,
        );
        let rp = solve_lp(&p).unwrap();
        let rd = solve_lp(&d).unwrap();
        prop_assert_eq!(rp.status, Status::Optimal);
        prop_assert_eq!(rd.status, Status::Optimal);
        prop_assert!((rp.objective - rd.objective).abs() < 1e-7 * (1.0 + rp.objective.abs()));
        prop_assert!(p.evaluate(&rp.values).unwrap().is_feasible());
    }

    #[test]
    fn mip_matches_enumeration(
        a in prop::collection::vec(prop::collection::vec(-4i32..8, 6), 1..4),
        b in prop::collection::vec(0i32..12, 4),
        c in prop::collection::vec(-6i32..10, 6),
    ) {
        let n = 6;
        let mut m = Model::new("bin");
        for j in 0..n {
            m.add_binary(format!("x{j}")).unwrap();
        }
        for (i, row) in a.iter().enumerate() {
            m.add_constraint(format!("r{i}"), (0..n).map(|j| (j, f64::from(row[j]))), RowSense::Le, f64::from(b[i])).unwrap();
        }
        m.set_objective(ObjSense::Maximize, (0..n).map(|j| (j, f64::from(c[j]))), 0.0);
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << n) {
            let x: Vec<f64> = (0..n).map(|j| f64::from((mask >> j) & 1)).collect();
            let e = m.evaluate(&x).unwrap();
            if e.is_feasible() && best.is_none_or(|v| e.objective > v) {
                best = Some(e.objective);
            }
        }
        let r = solve_mip(&m, &MipOptions::default()).unwrap();
        match best {
            None => prop_assert_eq!(r.status, Status::Infeasible),
            Some(v) => {
                prop_assert_eq!(r.status, Status::Optimal);
                prop_assert!((r.objective - v).abs() < 1e-6);
                prop_assert!((r.bound - r.objective).abs() < 1e-6 * (1.0 + v.abs()));
                let lp = solve_lp(&m).unwrap();
                prop_assert!(lp.objective >= v - 1e-7);
            }
        }
    }
}

#[test]
fn embedded_solves_are_reproducible() {
    let mut m = Model::new("rep");
    let xs: Vec<usize> = (0..8).map(|i| m.add_binary(format!("x{i}")).unwrap()).collect();
    m.add_constraint(
        "cap",
        xs.iter().enumerate().map(|(i, &x)| (x, 1.0 + i as f64 % 3.0)),
        RowSense::Le,
        7.5,
    )
    .unwrap();
    m.set_objective(
        ObjSense::Maximize,
        xs.iter().enumerate().map(|(i, &x)| (x, 2.0 + (i * 7 % 5) as f64)),
        0.0,
    );
    let a = solve_mip(&m, &MipOptions::default()).unwrap();
    let b = solve_mip(&m, &MipOptions::default()).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.stats.nodes, b.stats.nodes);
}
