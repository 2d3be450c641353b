use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use krevise::base_problems::{
    generate_capacity_planning, generate_lot_sizing, generate_saghp, BaseInstance, CapacityPlanningParams,
};
use krevise::experiments::{run_experiment, status_name, ExperimentSpec};
use krevise::formulations::{attach_revision, build_formulation, RevisionFormulationSpec};
use krevise::hypercube::{random_objective, solve_bruteforce, solve_dp, HypercubeInstance};
use krevise::revision::{is_k_revisable, max_inconsistency, min_revisability, revision_policy_of, PolicyJson};
use krevise::tree::{generate_btree, generate_path, generate_stree, STreeParams};
use krevise::ScenarioTree;
use krevise_milp::{
    read_mps, write_lp, write_mps, write_solution, Backend, Embedded, ExternalSolver, MipOptions, Model,
};
use rand::SeedableRng;
use serde_json::{json, Value};

use crate::{
    BackendChoice, BuildArgs, CheckArgs, Cli, Command, ExperimentArgs, ExportArgs, GenInstanceArgs, GenTreeArgs,
    InstanceKind, ModelFormat, SolveArgs, SolveHcArgs, TreeKind,
};

/// Version of the JSON printed under `--json`.
pub const SCHEMA: u32 = 1;

pub type CmdResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// What a subcommand prints: `json` under `--json`, `text` otherwise.
pub struct Output {
    pub json: Value,
    pub text: String,
}

impl Output {
    fn new(mut json: Value, text: String) -> Self {
        if let Value::Object(map) = &mut json {
            map.insert("schema".into(), json!(SCHEMA));
        }
        Self { json, text }
    }
}

pub fn run(cli: &Cli) -> CmdResult<Output> {
    match &cli.command {
        Command::GenTree(a) => gen_tree(a),
        Command::GenInstance(a) => gen_instance(a),
        Command::Check(a) => check(a),
        Command::SolveHc(a) => solve_hc(a),
        Command::Build(a) => build(a),
        Command::Export(a) => export(a),
        Command::Solve(a) => solve(a, cli.solver_cmd.as_deref()),
        Command::Experiment(a) => experiment(a, cli.solver_cmd.as_deref()),
    }
}

fn read(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()).into())
}

fn read_tree(path: &Path) -> CmdResult<ScenarioTree> {
    Ok(ScenarioTree::from_json(&read(path)?)?)
}

/// Writes `body` to `out` and reports the path, or returns it as the
/// printed text when there is no `out`.
fn emit(body: String, out: Option<&Path>, mut json: Value, artifact: &str) -> CmdResult<Output> {
    match out {
        Some(path) => {
            fs::write(path, &body).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            json["out"] = json!(path.display().to_string());
            let text = format!("wrote {}", path.display());
            Ok(Output::new(json, text))
        }
        None => {
            json[artifact] = serde_json::from_str(&body).unwrap_or(Value::String(body.clone()));
            Ok(Output::new(json, body))
        }
    }
}

fn gen_tree(a: &GenTreeArgs) -> CmdResult<Output> {
    let mut tree = match a.kind {
        TreeKind::Btree => generate_btree(a.stages)?,
        TreeKind::Path => generate_path(a.stages)?,
        TreeKind::Stree => generate_stree(&STreeParams::new(a.nodes, a.stages, a.m, a.rho, a.tol, a.seed))?,
    };
    if let Some(dims) = &a.dims {
        tree.set_strategic_dims(dims.clone())?;
    }
    let info = json!({"nodes": tree.len(), "T": tree.horizon(), "scenarios": tree.num_scenarios()});
    emit(tree.to_json(), a.out.as_deref(), info, "tree")
}

fn gen_instance(a: &GenInstanceArgs) -> CmdResult<Output> {
    let tree = || -> CmdResult<ScenarioTree> {
        let path = a.tree.as_deref().ok_or("--tree is required for this instance kind")?;
        read_tree(path)
    };
    let inst = match a.kind {
        InstanceKind::Hc => {
            let tree = tree()?;
            if a.lo > a.hi {
                return Err(format!("--lo {} exceeds --hi {}", a.lo, a.hi).into());
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed);
            let c = random_objective(&tree, &mut rng, a.lo, a.hi);
            BaseInstance::Hc(HypercubeInstance::new(tree, c)?)
        }
        InstanceKind::Ls => BaseInstance::Ls(generate_lot_sizing(&tree()?, a.seed)),
        InstanceKind::Tp => {
            let d = CapacityPlanningParams::default();
            let params = CapacityPlanningParams {
                n: a.tools.unwrap_or(d.n),
                o: a.operations.unwrap_or(d.o),
                p: a.products.unwrap_or(d.p),
                ..d
            };
            BaseInstance::Tp(generate_capacity_planning(&tree()?, &params, a.seed)?)
        }
        InstanceKind::Saghp => BaseInstance::Saghp(generate_saghp(&a.pattern, a.stages, a.flights, a.seed)?),
    };
    let info = json!({"kind": inst.name(), "nodes": inst.tree()?.len()});
    emit(inst.to_json(), a.out.as_deref(), info, "instance")
}

fn check(a: &CheckArgs) -> CmdResult<Output> {
    let tree = read_tree(&a.tree)?;
    let policy: PolicyJson = serde_json::from_str(&read(&a.policy)?)?;
    let x = policy.to_values(&tree)?;
    let revisable = is_k_revisable(&tree, &x, a.k)?;
    let min = min_revisability(&tree, &x)?;
    let witness = if revisable {
        None
    } else {
        max_inconsistency(&tree, &x, a.k)?.map(|(_, s)| s)
    };
    let mut text = format!("revisable: {revisable}\nmin_revisability: {min}\n");
    if let Some(s) = &witness {
        writeln!(text, "witness: root {} height {} pairs {:?}", s.root, s.height, s.pairs)?;
    }
    let json = json!({
        "revisable": revisable,
        "min_revisability": min,
        "witness": witness.map(|s| s.nodes()).unwrap_or_default(),
    });
    Ok(Output::new(json, text))
}

fn solve_hc(a: &SolveHcArgs) -> CmdResult<Output> {
    let mut inst = HypercubeInstance::from_json(&read(&a.instance)?)?;
    let split = !inst.tree.is_one_dimensional();
    if split {
        inst = inst.split().0;
    }
    if a.bruteforce {
        let value = solve_bruteforce(&inst, a.k)?;
        return Ok(Output::new(
            json!({"value": value, "method": "bruteforce", "split": split}),
            format!("value: {value}\n"),
        ));
    }
    let sol = solve_dp(&inst, a.k)?;
    let revisions: Vec<usize> = revision_policy_of(&inst.tree, &sol.plan)?
        .iter()
        .enumerate()
        .filter_map(|(v, &r)| r.then_some(v))
        .collect();
    let text = format!(
        "value: {}\nx: {:?}\nrevised nodes: {:?}\n",
        sol.value,
        sol.x.iter().map(|&v| v as u8).collect::<Vec<_>>(),
        revisions
    );
    let json = json!({
        "value": sol.value,
        "method": "dp",
        "split": split,
        "x": PolicyJson::from_values(&sol.x).x,
        "revisions": revisions,
    });
    Ok(Output::new(json, text))
}

/// Reads a tagged base instance, or a plain hypercube instance.
fn read_base(path: &Path) -> CmdResult<BaseInstance> {
    let text = read(path)?;
    match BaseInstance::from_json(&text) {
        Ok(b) => Ok(b),
        Err(tagged) => HypercubeInstance::from_json(&text)
            .map(BaseInstance::Hc)
            .map_err(|_| tagged.into()),
    }
}

fn build(a: &BuildArgs) -> CmdResult<Output> {
    let mut spec = RevisionFormulationSpec::new(a.formulation, a.k);
    spec.vector_mode = a.vector;
    let model = if a.base == "none" {
        let path = a.tree.as_deref().ok_or("--tree is required without --base")?;
        build_formulation(&read_tree(path)?, &spec)?.0
    } else {
        let inst = read_base(Path::new(&a.base))?;
        let tree = inst.tree()?;
        if let Some(path) = &a.tree {
            if read_tree(path)? != tree {
                return Err(format!("{} differs from the instance's tree", path.display()).into());
            }
        }
        attach_revision(&inst.build()?, &tree, &spec)?
    };
    let body = match a.format {
        ModelFormat::Mps => write_mps(&model)?,
        ModelFormat::Lp => write_lp(&model)?,
    };
    let info = json!({
        "formulation": a.formulation.name(),
        "K": a.k,
        "vars": model.num_vars(),
        "integer_vars": model.num_integer_vars(),
        "constraints": model.num_constraints(),
    });
    emit(body, a.out.as_deref(), info, "model")
}

fn export(a: &ExportArgs) -> CmdResult<Output> {
    let model = read_mps(&read(&a.model)?)?;
    let body = match a.format {
        ModelFormat::Mps => write_mps(&model)?,
        ModelFormat::Lp => write_lp(&model)?,
    };
    let info = json!({"vars": model.num_vars(), "constraints": model.num_constraints()});
    emit(body, a.out.as_deref(), info, "model")
}

fn external(cmd: Option<&str>) -> Option<ExternalSolver> {
    cmd.map(ExternalSolver::new).or_else(ExternalSolver::from_env)
}

fn backend(choice: BackendChoice, cmd: Option<&str>, embedded: Embedded) -> CmdResult<Box<dyn Backend + Sync>> {
    Ok(match (choice, external(cmd)) {
        (BackendChoice::Embedded, _) | (BackendChoice::Auto, None) => Box::new(embedded),
        (_, Some(ext)) => {
            log::info!("external solver: {}", ext.template);
            Box::new(ext)
        }
        (BackendChoice::External, None) => {
            return Err("no external solver configured; pass --solver-cmd or set KREVISE_SOLVER_CMD".into())
        }
    })
}

fn solve(a: &SolveArgs, cmd: Option<&str>) -> CmdResult<Output> {
    let model: Model = read_mps(&read(&a.model)?)?;
    let mut options = MipOptions::default();
    if let Some(t) = a.time_limit {
        options.time_limit = Some(Duration::try_from_secs_f64(t).map_err(|e| format!("--time-limit: {e}"))?);
    }
    if let Some(n) = a.node_limit {
        options.node_limit = n;
    }
    let res = backend(a.backend, cmd, Embedded { options })?.solve(&model, a.relax)?;
    if let Some(path) = &a.sol {
        if !res.is_optimal() {
            return Err(format!("no solution to write: status {}", status_name(res.status)).into());
        }
        fs::write(path, write_solution(&model, &res)).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    let nonzero: serde_json::Map<String, Value> = model
        .variables
        .iter()
        .zip(&res.values)
        .filter(|(_, &v)| v.abs() > 1e-9)
        .map(|(var, &v)| (var.name.clone(), json!(v)))
        .collect();
    let mut text = format!("status: {}\n", status_name(res.status));
    if res.is_optimal() {
        writeln!(text, "objective: {}", res.objective)?;
        for (name, v) in &nonzero {
            writeln!(text, "{name} = {v}")?;
        }
    }
    let json = json!({
        "status": status_name(res.status),
        "objective": res.is_optimal().then_some(res.objective),
        "bound": res.bound.is_finite().then_some(res.bound),
        "nodes": res.stats.nodes,
        "iterations": res.stats.iterations,
        "values": nonzero,
    });
    Ok(Output::new(json, text))
}

fn experiment(a: &ExperimentArgs, cmd: Option<&str>) -> CmdResult<Output> {
    let spec: ExperimentSpec = serde_json::from_str(&read(&a.spec)?)?;
    spec.validate()?;
    let be = backend(a.backend, cmd, krevise::experiments::embedded_backend(spec.time_limit))?;
    let report = run_experiment(&spec, be.as_ref())?;
    report.write_csv(fs::File::create(&a.out).map_err(|e| format!("cannot write {}: {e}", a.out.display()))?)?;
    if let Some(path) = &a.summary {
        report
            .write_summary_csv(fs::File::create(path).map_err(|e| format!("cannot write {}: {e}", path.display()))?)?;
    }
    let errors = report.rows.iter().filter(|r| r.status.starts_with("error")).count();
    let mut text = format!("{} rows written to {}\n", report.rows.len(), a.out.display());
    let mut means = Vec::new();
    for (problem, tree, k, form, time, gap, nodes) in report.means() {
        writeln!(
            text,
            "{problem} {tree} K={k} {form}: mean time {time:.3}s, gap {gap:?}, nodes {nodes:?}"
        )?;
        means.push(json!({
            "problem": problem, "tree": tree, "K": k, "formulation": form,
            "time_s": time, "rel_gap": gap, "embedded_bb_nodes": nodes,
        }));
    }
    let json = json!({
        "out": a.out.display().to_string(),
        "rows": report.rows.len(),
        "errors": errors,
        "means": means,
    });
    Ok(Output::new(json, text))
}
