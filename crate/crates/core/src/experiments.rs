//! Formulation benchmarks and value-of-revision sweeps at desk scale.

use std::io::Write;
use std::time::{Duration, Instant};

use krevise_milp::{Backend, Embedded, MipOptions, Model, ObjSense, SolveResult, Status};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base_problems::{
    generate_capacity_planning, generate_lot_sizing, generate_saghp, BaseInstance, CapacityPlanningParams,
};
use crate::error::{Error, Result};
use crate::formulations::{
    attach_revision, cut_loop_st, partially_adaptive, stage_subsets, CutMode, FormulationKind, RevisionFormulationSpec,
    XBlock, CUT_ROUNDS,
};
use crate::hypercube::{random_objective, solve_dp, HypercubeInstance};
use crate::tree::{generate_btree, generate_path, generate_stree, STreeParams, ScenarioTree};

pub const CSV_HEADER: [&str; 11] = [
    "problem",
    "tree",
    "seed",
    "K",
    "formulation",
    "status",
    "time_s",
    "obj_ip",
    "obj_lp",
    "rel_gap",
    "embedded_bb_nodes",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Hc,
    Ls,
    Tp,
    Saghp,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Hc => "hc",
            ProblemKind::Ls => "ls",
            ProblemKind::Tp => "tp",
            ProblemKind::Saghp => "saghp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeSpec {
    Btree {
        #[serde(rename = "T")]
        stages: usize,
    },
    Path {
        #[serde(rename = "T")]
        stages: usize,
    },
    /// Sparse random tree; the seed of each instance replaces `params.seed`.
    Stree {
        #[serde(flatten)]
        params: STreeParams,
    },
    /// Weather tree for ground holding.
    Weather {
        pattern: String,
        #[serde(rename = "T")]
        stages: usize,
    },
}

impl TreeSpec {
    pub fn label(&self) -> String {
        match self {
            TreeSpec::Btree { stages } => format!("btree-T{stages}"),
            TreeSpec::Path { stages } => format!("path-T{stages}"),
            TreeSpec::Stree { params } => format!("stree-n{}-T{}", params.target_nodes, params.stages),
            TreeSpec::Weather { pattern, stages } => format!("weather-{pattern}-T{stages}"),
        }
    }

    pub fn build(&self, seed: u64) -> Result<ScenarioTree> {
        match self {
            TreeSpec::Btree { stages } => generate_btree(*stages),
            TreeSpec::Path { stages } => generate_path(*stages),
            TreeSpec::Stree { params } => generate_stree(&STreeParams { seed, ..params.clone() }),
            TreeSpec::Weather { pattern, stages } => Ok(crate::base_problems::saghp_weather_tree(pattern, *stages)?.0),
        }
    }
}

fn default_time_limit() -> f64 {
    60.0
}

fn default_range() -> (i32, i32) {
    (-10, 10)
}

fn default_flights() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub problem: ProblemKind,
    pub tree: TreeSpec,
    #[serde(rename = "K")]
    pub k: Vec<usize>,
    pub formulations: Vec<FormulationKind>,
    pub seeds: Vec<u64>,
    /// Per-solve limit in seconds.
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    /// Also compute the best partially adaptive value per K.
    #[serde(default)]
    pub partially_adaptive: bool,
    /// Hypercube objective range (inclusive).
    #[serde(default = "default_range")]
    pub objective_range: (i32, i32),
    #[serde(default)]
    pub capacity: Option<CapacityPlanningParams>,
    #[serde(default = "default_flights")]
    pub flights: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Precondition("experiment needs at least one seed".into()));
        }
        if self.k.is_empty() || self.formulations.is_empty() {
            return Err(Error::Precondition("experiment needs K values and formulations".into()));
        }
        let vector = matches!(self.problem, ProblemKind::Tp | ProblemKind::Saghp);
        if let Some(f) = self.formulations.iter().find(|f| vector && !f.supports_vectors()) {
            return Err(Error::Precondition(format!(
                "{f} needs a scalar strategic block, {} has vector decisions",
                self.problem.name()
            )));
        }
        if matches!(self.tree, TreeSpec::Weather { .. }) != (self.problem == ProblemKind::Saghp) {
            return Err(Error::Precondition(
                "weather trees go with ground holding and only there".into(),
            ));
        }
        if !(self.time_limit > 0.0) {
            return Err(Error::Precondition("time limit must be positive".into()));
        }
        Ok(())
    }

    pub fn instance(&self, seed: u64) -> Result<BaseInstance> {
        let tree = self.tree.build(seed)?;
        Ok(match self.problem {
            ProblemKind::Hc => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (lo, hi) = self.objective_range;
                let c = random_objective(&tree, &mut rng, lo, hi);
                BaseInstance::Hc(HypercubeInstance::new(tree, c)?)
            }
            ProblemKind::Ls => BaseInstance::Ls(generate_lot_sizing(&tree, seed)),
            ProblemKind::Tp => BaseInstance::Tp(generate_capacity_planning(
                &tree,
                &self.capacity.unwrap_or_default(),
                seed,
            )?),
            ProblemKind::Saghp => {
                let TreeSpec::Weather { pattern, stages } = &self.tree else {
                    unreachable!("validated")
                };
                BaseInstance::Saghp(generate_saghp(pattern, *stages, self.flights, seed)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub problem: String,
    pub tree: String,
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub formulation: String,
    pub status: String,
    pub time_s: f64,
    pub obj_ip: Option<f64>,
    pub obj_lp: Option<f64>,
    pub rel_gap: Option<f64>,
    pub embedded_bb_nodes: Option<u64>,
}

/// Values per instance and budget. Losses are relative to the fully
/// adaptive optimum, values relative to the partially adaptive one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub problem: String,
    pub tree: String,
    pub seed: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub z_ms: Option<f64>,
    pub z_k: Option<f64>,
    pub z_pa: Option<f64>,
    pub rel_loss: Option<f64>,
    pub rel_value: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub summaries: Vec<InstanceSummary>,
}

impl Report {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.summaries {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean of each numeric column per (problem, tree, K, formulation).
    pub fn means(&self) -> Vec<(String, String, usize, String, f64, Option<f64>, Option<f64>)> {
        let mut groups: std::collections::BTreeMap<(String, String, usize, String), Vec<&ReportRow>> =
            Default::default();
        for r in &self.rows {
            groups
                .entry((r.problem.clone(), r.tree.clone(), r.k, r.formulation.clone()))
                .or_default()
                .push(r);
        }
        let mean = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        groups
            .into_iter()
            .map(|((p, t, k, f), rows)| {
                let time = rows.iter().map(|r| r.time_s).sum::<f64>() / rows.len() as f64;
                let gap = mean(rows.iter().filter_map(|r| r.rel_gap).collect());
                let nodes = mean(
                    rows.iter()
                        .filter_map(|r| r.embedded_bb_nodes.map(|n| n as f64))
                        .collect(),
                );
                (p, t, k, f, time, gap, nodes)
            })
            .collect()
    }
}

pub fn status_name(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::Infeasible => "infeasible",
        Status::Unbounded => "unbounded",
        Status::Limit => "limit",
    }
}

/// |b − f| / |f| for LP bound b and integer optimum f.
pub fn relative_gap(lp: f64, ip: f64) -> Option<f64> {
    (ip != 0.0 && lp.is_finite()).then(|| (lp - ip).abs() / ip.abs())
}

struct Cell {
    status: String,
    ip: Option<f64>,
    lp: Option<f64>,
    nodes: Option<u64>,
}

fn usable(r: &SolveResult) -> Option<f64> {
    r.is_optimal().then_some(r.objective)
}

fn solve_cell(
    base: &Model,
    tree: &ScenarioTree,
    k: usize,
    kind: FormulationKind,
    backend: &(dyn Backend + Sync),
) -> Result<Cell> {
    if kind == FormulationKind::St {
        let ip = cut_loop_st(base, tree, k, backend, CutMode::Mip, CUT_ROUNDS)?;
        let lp = cut_loop_st(base, tree, k, backend, CutMode::Lp, CUT_ROUNDS)?;
        return Ok(Cell {
            status: status_name(ip.result.status).into(),
            ip: usable(&ip.result),
            lp: usable(&lp.result),
            nodes: Some(ip.result.stats.nodes),
        });
    }
    let mut spec = RevisionFormulationSpec::new(kind, k);
    spec.vector_mode = !tree.is_one_dimensional();
    let model = attach_revision(base, tree, &spec)?;
    let ip = backend.solve(&model, false)?;
    let lp = backend.solve(&model, true)?;
    Ok(Cell {
        status: status_name(ip.status).into(),
        ip: usable(&ip),
        lp: usable(&lp),
        nodes: Some(ip.stats.nodes),
    })
}

/// Best objective over adaptive stage sets of size `k`.
pub fn partially_adaptive_value(
    base: &Model,
    tree: &ScenarioTree,
    k: usize,
    backend: &(dyn Backend + Sync),
) -> Result<Option<f64>> {
    let x = XBlock::from_model(base, tree)?;
    let maximize = base.objective.sense == ObjSense::Maximize;
    let mut best: Option<f64> = None;
    for stages in stage_subsets(tree.horizon(), k)? {
        let mut m = base.clone();
        partially_adaptive(&mut m, tree, &x, &stages)?;
        let r = backend.solve(&m, false)?;
        if let Some(v) = usable(&r) {
            best = Some(match best {
                Some(b) if maximize => b.max(v),
                Some(b) => b.min(v),
                None => v,
            });
        }
    }
    Ok(best)
}

/// Runs every (seed, K, formulation) cell of the spec. Rows come out in
/// seed, K, formulation order whatever the thread count.
pub fn run_experiment(spec: &ExperimentSpec, backend: &(dyn Backend + Sync)) -> Result<Report> {
    spec.validate()?;
    let label = spec.tree.label();
    let problem = spec.problem.name().to_string();
    let instances: Vec<(u64, Result<(BaseInstance, Model, ScenarioTree)>)> = spec
        .seeds
        .iter()
        .map(|&seed| {
            let built = spec.instance(seed).and_then(|inst| {
                let model = inst.build()?;
                let tree = inst.tree()?;
                Ok((inst, model, tree))
            });
            (seed, built)
        })
        .collect();
    let mut cells = Vec::new();
    for (i, (_, built)) in instances.iter().enumerate() {
        if built.is_ok() {
            for &k in &spec.k {
                for &f in &spec.formulations {
                    cells.push((i, k, f));
                }
            }
        }
    }
    let rows: Vec<ReportRow> = cells
        .par_iter()
        .map(|&(i, k, kind)| {
            let (seed, built) = &instances[i];
            let (_, model, tree) = built.as_ref().expect("filtered");
            let start = Instant::now();
            let cell = solve_cell(model, tree, k, kind, backend);
            let time_s = start.elapsed().as_secs_f64();
            let cell = cell.unwrap_or_else(|e| Cell {
                status: format!("error: {e}"),
                ip: None,
                lp: None,
                nodes: None,
            });
            ReportRow {
                problem: problem.clone(),
                tree: label.clone(),
                seed: *seed,
                k,
                formulation: kind.name().into(),
                status: cell.status,
                time_s,
                obj_ip: cell.ip,
                obj_lp: cell.lp,
                rel_gap: cell.ip.zip(cell.lp).and_then(|(ip, lp)| relative_gap(lp, ip)),
                embedded_bb_nodes: cell.nodes,
            }
        })
        .collect();

    let mut summaries = Vec::new();
    for (seed, built) in &instances {
        let Ok((inst, model, tree)) = built else { continue };
        let z_ms = usable(&backend.solve(model, false)?);
        for &k in &spec.k {
            let z_k = match inst {
                BaseInstance::Hc(hc) => Some(solve_dp(hc, k.min(tree.horizon() - 1))?.value),
                _ => rows
                    .iter()
                    .find(|r| r.seed == *seed && r.k == k && r.obj_ip.is_some())
                    .and_then(|r| r.obj_ip),
            };
            let z_pa = if spec.partially_adaptive {
                match inst {
                    BaseInstance::Hc(hc) => Some(crate::hypercube::solve_partially_adaptive(hc, k)?.0),
                    _ => partially_adaptive_value(model, tree, k, backend)?,
                }
            } else {
                None
            };
            let ratio = |num: f64, den: f64| (den != 0.0).then(|| num / den.abs());
            summaries.push(InstanceSummary {
                problem: problem.clone(),
                tree: label.clone(),
                seed: *seed,
                k,
                z_ms,
                z_k,
                z_pa,
                rel_loss: z_ms.zip(z_k).and_then(|(ms, zk)| ratio((ms - zk).abs(), zk)),
                rel_value: z_k.zip(z_pa).and_then(|(zk, pa)| {
                    let gain = if model.objective.sense == ObjSense::Maximize {
                        zk - pa
                    } else {
                        pa - zk
                    };
                    ratio(gain, pa)
                }),
            });
        }
    }
    for (seed, built) in &instances {
        if let Err(e) = built {
            summaries.push(InstanceSummary {
                problem: problem.clone(),
                tree: format!("{label} (error: {e})"),
                seed: *seed,
                k: 0,
                z_ms: None,
                z_k: None,
                z_pa: None,
                rel_loss: None,
                rel_value: None,
            });
        }
    }
    Ok(Report { rows, summaries })
}

/// Embedded solver with a per-solve time limit in seconds.
pub fn embedded_backend(time_limit: f64) -> Embedded {
    Embedded {
        options: MipOptions {
            time_limit: Some(Duration::from_secs_f64(time_limit)),
            ..MipOptions::default()
        },
    }
}

/// One point of the LP-to-integer ratio sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    #[serde(rename = "K")]
    pub k: usize,
    pub z_lp: f64,
    pub z_ip: f64,
    pub ratio: f64,
    pub bound: f64,
    pub instance: HypercubeInstance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub instances: usize,
    /// Largest observed ratio per K, with its instance.
    pub worst: Vec<RatioRecord>,
    /// Ratios above (2K+1)/(K+1) + 1e-6.
    pub violations: Vec<RatioRecord>,
}

pub const RATIO_TOL: f64 = 1e-6;

/// Conjectured bound on the plan formulation's LP ratio.
pub fn ratio_bound(k: usize) -> f64 {
    (2 * k + 1) as f64 / (k + 1) as f64
}

/// LP value of the plan formulation on a hypercube instance.
pub fn cp_lp_value(inst: &HypercubeInstance, k: usize) -> Result<f64> {
    let base = crate::base_problems::hypercube_model(inst)?;
    let mut spec = RevisionFormulationSpec::new(FormulationKind::Cp, k);
    spec.vector_mode = !inst.tree.is_one_dimensional();
    let model = attach_revision(&base, &inst.tree, &spec)?;
    let r = Embedded::default().solve(&model, true)?;
    if !r.is_optimal() {
        return Err(Error::SolveStatus(format!("plan LP ended {}", status_name(r.status))));
    }
    Ok(r.objective)
}

/// Maximum z_K^LP / z_K for the plan formulation over the given
/// instances and budgets. Instances with z_K = 0 are skipped.
pub fn conjecture_sweep(instances: &[HypercubeInstance], ks: &[usize]) -> Result<ConjectureReport> {
    let cells: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| ks.iter().map(move |&k| (i, k)))
        .filter(|&(i, k)| k < instances[i].tree.horizon())
        .collect();
    let records: Vec<Option<RatioRecord>> = cells
        .par_iter()
        .map(|&(i, k)| -> Result<Option<RatioRecord>> {
            let inst = &instances[i];
            let z_ip = solve_dp(inst, k)?.value;
            if z_ip <= 0.0 {
                return Ok(None);
            }
            let z_lp = cp_lp_value(inst, k)?;
            Ok(Some(RatioRecord {
                k,
                z_lp,
                z_ip,
                ratio: z_lp / z_ip,
                bound: ratio_bound(k),
                instance: inst.clone(),
            }))
        })
        .collect::<Result<_>>()?;
    let mut worst: Vec<RatioRecord> = Vec::new();
    let mut violations = Vec::new();
    for rec in records.into_iter().flatten() {
        if rec.ratio > rec.bound + RATIO_TOL {
            violations.push(rec.clone());
        }
        match worst.iter_mut().find(|w| w.k == rec.k) {
            Some(w) if rec.ratio > w.ratio => *w = rec,
            Some(_) => {}
            None => worst.push(rec),
        }
    }
    worst.sort_by_key(|w| w.k);
    Ok(ConjectureReport {
        instances: instances.len(),
        worst,
        violations,
    })
}

/// Seeded hypercube instances on B-trees and sparse trees with at most
/// `max_stages` stages.
pub fn sweep_instances(count: usize, max_stages: usize, seed: u64) -> Vec<HypercubeInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let stages = 2 + i % (max_stages - 1);
            let tree = if i % 2 == 0 {
                generate_btree(stages).expect("small B-tree")
            } else {
                crate::tree::random_tree(&mut rng, stages, 24)
            };
            let c = random_objective(&tree, &mut rng, -10, 10);
            HypercubeInstance::new(tree, c).expect("matching objective")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn hc_spec() -> ExperimentSpec {
        ExperimentSpec {
            problem: ProblemKind::Hc,
            tree: TreeSpec::Btree { stages: 3 },
            k: vec![1],
            formulations: FormulationKind::ALL.to_vec(),
            seeds: vec![1, 2, 3],
            time_limit: 60.0,
            partially_adaptive: true,
            objective_range: (-10, 10),
            capacity: None,
            flights: 4,
        }
    }

    fn strip_time(csv: &str) -> String {
        csv.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(6);
                f.join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn formulations_agree_and_rerun_matches() {
        let spec = hc_spec();
        let report = run_experiment(&spec, &Embedded::default()).unwrap();
        assert_eq!(report.rows.len(), 3 * 6);
        for seed in &spec.seeds {
            let vals: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.seed == *seed)
                .map(|r| r.obj_ip.unwrap())
                .collect();
            let inst = spec.instance(*seed).unwrap();
            let BaseInstance::Hc(hc) = inst else { unreachable!() };
            let z = solve_dp(&hc, 1).unwrap().value;
            assert!(vals.iter().all(|v| (v - z).abs() < 1e-6), "{vals:?} vs {z}");
        }
        for s in &report.summaries {
            assert!(s.z_pa.unwrap() <= s.z_k.unwrap() && s.z_k.unwrap() <= s.z_ms.unwrap());
        }
        let mut a = Vec::new();
        report.write_csv(&mut a).unwrap();
        let mut b = Vec::new();
        run_experiment(&spec, &Embedded::default())
            .unwrap()
            .write_csv(&mut b)
            .unwrap();
        let (a, b) = (String::from_utf8(a).unwrap(), String::from_utf8(b).unwrap());
        assert!(a.starts_with(&CSV_HEADER.join(",")));
        assert_eq!(strip_time(&a), strip_time(&b));
    }

    #[test]
    fn full_budget_has_no_loss() {
        let spec = ExperimentSpec {
            problem: ProblemKind::Ls,
            k: vec![2],
            formulations: vec![FormulationKind::CpPlus],
            seeds: vec![7],
            partially_adaptive: false,
            ..hc_spec()
        };
        let report = run_experiment(&spec, &Embedded::default()).unwrap();
        assert_eq!(report.summaries[0].rel_loss, Some(0.0));
    }

    #[test]
    fn bad_specs() {
        let mut spec = hc_spec();
        spec.seeds.clear();
        assert!(run_experiment(&spec, &Embedded::default()).is_err());
        let spec = ExperimentSpec {
            problem: ProblemKind::Tp,
            formulations: vec![FormulationKind::Stdp],
            ..hc_spec()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn compact_ratio() {
        let tree = fixtures::three_stage_tree();
        let inst = HypercubeInstance::from_scalar(tree, fixtures::left_objective()).unwrap();
        let lp = cp_lp_value(&inst, 1).unwrap();
        let ip = solve_dp(&inst, 1).unwrap().value;
        assert!(lp / ip <= ratio_bound(1) + RATIO_TOL);
        let full = cp_lp_value(&inst, 2).unwrap();
        assert!((full - inst.z_ms()).abs() < 1e-9);
    }

    #[test]
    fn small_sweep() {
        let inst = sweep_instances(12, 4, 3);
        let r = conjecture_sweep(&inst, &[1, 2]).unwrap();
        assert!(r.violations.is_empty());
        assert!(r.worst.iter().all(|w| w.ratio >= 1.0 - 1e-9));
    }
}
