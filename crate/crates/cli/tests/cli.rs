use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use krevise::fixtures;
use krevise::formulations::{build_formulation, FormulationKind, RevisionFormulationSpec};
use krevise::hypercube::{solve_bruteforce, solve_dp, HypercubeInstance};
use krevise::revision::{is_k_revisable, min_revisability, PolicyJson};
use krevise::ScenarioTree;
use krevise_milp::{read_mps, write_lp, write_mps};
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(name: &str) -> String {
    root().join("fixtures").join(name).display().to_string()
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn krevise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krevise"))
        .arg("--quiet")
        .args(args)
        .env_remove("KREVISE_SOLVER_CMD")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn fixture_files_match_library() {
    let tree = ScenarioTree::from_json(&std::fs::read_to_string(fixture("three_stage_tree.json")).unwrap()).unwrap();
    assert_eq!(tree, fixtures::three_stage_tree());
    let tree = ScenarioTree::from_json(&std::fs::read_to_string(fixture("three_branch_tree.json")).unwrap()).unwrap();
    assert_eq!(tree, fixtures::three_branch_tree());
    for (name, x) in [
        ("left_policy.json", fixtures::left_policy()),
        ("right_policy.json", fixtures::right_policy()),
        ("three_branch_fractional_x.json", fixtures::three_branch_fractional_x()),
    ] {
        let p: PolicyJson = serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
        assert_eq!(p, PolicyJson::from_values(&x), "{name}");
    }
}

#[test]
fn check_matches_golden_and_library() {
    let out = krevise(&[
        "--json",
        "check",
        "--tree",
        &fixture("three_stage_tree.json"),
        "--policy",
        &fixture("right_policy.json"),
        "--K",
        "1",
    ]);
    assert_eq!(
        String::from_utf8(out.stdout.clone()).unwrap(),
        golden("check_right_k1.json")
    );
    let v = json_of(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["revisable"], false);
    assert_eq!(v["min_revisability"], 2);

    let tree = fixtures::three_stage_tree();
    for (file, x) in [
        ("left_policy.json", fixtures::left_policy()),
        ("right_policy.json", fixtures::right_policy()),
    ] {
        for k in 0..3 {
            let v = json_of(&krevise(&[
                "--json",
                "check",
                "--tree",
                &fixture("three_stage_tree.json"),
                "--policy",
                &fixture(file),
                "--K",
                &k.to_string(),
            ]));
            assert_eq!(v["revisable"], is_k_revisable(&tree, &x, k).unwrap());
            assert_eq!(v["min_revisability"], min_revisability(&tree, &x).unwrap());
            assert_eq!(v["witness"].as_array().unwrap().is_empty(), v["revisable"] == true);
        }
    }
}

#[test]
fn solve_hc_matches_golden_and_library() {
    let out = krevise(&[
        "--json",
        "solve-hc",
        "--instance",
        &fixture("signed_instance.json"),
        "--K",
        "1",
    ]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        golden("solve_hc_signed_k1.json")
    );

    for name in ["signed_instance.json", "dicut_instance.json"] {
        let mut inst = HypercubeInstance::from_json(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
        if !inst.tree.is_one_dimensional() {
            inst = inst.split().0;
        }
        for k in 0..inst.tree.horizon() {
            let dp = json_of(&krevise(&[
                "--json",
                "solve-hc",
                "--instance",
                &fixture(name),
                "--K",
                &k.to_string(),
            ]));
            let bf = json_of(&krevise(&[
                "--json",
                "solve-hc",
                "--instance",
                &fixture(name),
                "--K",
                &k.to_string(),
                "--bruteforce",
            ]));
            let want = solve_dp(&inst, k).unwrap().value;
            assert_eq!(dp["value"].as_f64().unwrap(), want, "{name} K={k}");
            assert_eq!(bf["value"].as_f64().unwrap(), solve_bruteforce(&inst, k).unwrap());
            assert_eq!(dp["value"], bf["value"]);
        }
    }
}

#[test]
fn full_budget_gives_positive_part_sum() {
    let inst =
        HypercubeInstance::from_json(&std::fs::read_to_string(fixture("signed_instance.json")).unwrap()).unwrap();
    let want: f64 = fixtures::signed_objective().iter().map(|c| c.max(0.0)).sum();
    for k in [2, 3, 7] {
        let v = json_of(&krevise(&[
            "--json",
            "solve-hc",
            "--instance",
            &fixture("signed_instance.json"),
            "--K",
            &k.to_string(),
        ]));
        assert_eq!(v["value"].as_f64().unwrap(), want);
    }
    assert_eq!(inst.z_ms(), want);
}

#[test]
fn usage_errors_exit_2() {
    let out = krevise(&["check", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = krevise(&["solve-hc", "--instance", "i.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = krevise(&["build", "--formulation", "nonsense", "--K", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = krevise(&[
        "--json",
        "check",
        "--tree",
        "missing.json",
        "--policy",
        "missing.json",
        "--K",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert!(v["error"].as_str().unwrap().contains("missing.json"));

    // fractional policy
    let out = krevise(&[
        "check",
        "--tree",
        &fixture("three_branch_tree.json"),
        "--policy",
        &fixture("three_branch_fractional_x.json"),
        "--K",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"T":2,"parents":[null,5],"stage":[1,2],"strategic_dim":[1,1],"leaf_prob":{"1":1.0}}"#,
    )
    .unwrap();
    let out = krevise(&["gen-instance", "--kind", "hc", "--tree", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = krevise(&[
        "solve",
        "--model",
        &fixture("three_stage_tree.json"),
        "--backend",
        "external",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_tree_matches_library() {
    let out = krevise(&["gen-tree", "--kind", "btree", "--T", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim_end(), fixtures::three_stage_tree().to_json());
    assert_eq!(
        text,
        std::fs::read_to_string(fixture("three_stage_tree.json")).unwrap() + "\n"
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let v = json_of(&krevise(&[
        "--json",
        "gen-tree",
        "--kind",
        "stree",
        "--T",
        "4",
        "--nodes",
        "20",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]));
    let tree = ScenarioTree::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["nodes"].as_u64().unwrap() as usize, tree.len());
    assert_eq!(tree.horizon(), 4);
}

#[test]
fn build_and_export_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let tree = fixtures::three_stage_tree();
    for kind in FormulationKind::ALL {
        let path = dir.path().join(format!("{}.mps", kind.name()));
        let out = krevise(&[
            "build",
            "--formulation",
            kind.name(),
            "--tree",
            &fixture("three_stage_tree.json"),
            "--K",
            "1",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let (model, _, _) = build_formulation(&tree, &RevisionFormulationSpec::new(kind, 1)).unwrap();
        let mps = std::fs::read_to_string(&path).unwrap();
        assert_eq!(mps, write_mps(&model).unwrap(), "{}", kind.name());

        let out = krevise(&["export", "--model", path.to_str().unwrap(), "--format", "lp"]);
        assert!(out.status.success());
        let lp = String::from_utf8(out.stdout).unwrap();
        assert_eq!(lp.trim_end(), write_lp(&read_mps(&mps).unwrap()).unwrap().trim_end());
    }
}

#[test]
fn build_on_base_then_solve_reaches_dp_value() {
    let dir = tempfile::tempdir().unwrap();
    let inst_path = dir.path().join("hc.json");
    let out = krevise(&[
        "gen-instance",
        "--kind",
        "hc",
        "--tree",
        &fixture("three_stage_tree.json"),
        "--seed",
        "4",
        "--out",
        inst_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let inst = HypercubeInstance::from_json(&std::fs::read_to_string(&inst_path).unwrap()).unwrap();
    for kind in ["cp+", "stdp", "path"] {
        let model = dir.path().join(format!("{kind}.mps"));
        let out = krevise(&[
            "build",
            "--formulation",
            kind,
            "--K",
            "1",
            "--base",
            inst_path.to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v = json_of(&krevise(&["--json", "solve", "--model", model.to_str().unwrap()]));
        assert_eq!(v["status"], "optimal");
        let got = v["objective"].as_f64().unwrap();
        assert!((got - solve_dp(&inst, 1).unwrap().value).abs() < 1e-6, "{kind}: {got}");
    }
}

#[test]
fn experiment_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"problem":"hc","tree":{"kind":"btree","T":3},"K":[1],"formulations":["cp","stdp"],"seeds":[0,1],"partially_adaptive":true}"#,
    )
    .unwrap();
    let csv = dir.path().join("report.csv");
    let summary = dir.path().join("summary.csv");
    let v = json_of(&krevise(&[
        "--json",
        "experiment",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--summary",
        summary.to_str().unwrap(),
    ]));
    assert_eq!(v["rows"], 4);
    assert_eq!(v["errors"], 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "problem,tree,seed,K,formulation,status,time_s,obj_ip,obj_lp,rel_gap,embedded_bb_nodes"
    );
    assert_eq!(std::fs::read_to_string(&summary).unwrap().lines().count(), 3);
}

#[test]
fn external_bridge_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.mps");
    let out = krevise(&[
        "build",
        "--formulation",
        "stdp",
        "--K",
        "1",
        "--base",
        &fixture("signed_instance.json"),
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let template = format!(
        "{} -q solve --backend embedded --model {{mps}} --sol {{sol}}",
        env!("CARGO_BIN_EXE_krevise")
    );
    let ext = json_of(&krevise(&[
        "--json",
        "--solver-cmd",
        &template,
        "solve",
        "--backend",
        "external",
        "--model",
        model.to_str().unwrap(),
    ]));
    let emb = json_of(&krevise(&[
        "--json",
        "solve",
        "--backend",
        "embedded",
        "--model",
        model.to_str().unwrap(),
    ]));
    assert_eq!(ext["status"], "optimal");
    assert_eq!(ext["objective"], emb["objective"]);
    assert_eq!(ext["values"], emb["values"]);
}
