use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Multistage stochastic programs with a limited number of revisions.
#[derive(Debug, Parser)]
#[command(name = "krevise", version)]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    /// External solver command template; overrides KREVISE_SOLVER_CMD.
    #[arg(long, global = true, value_name = "CMD")]
    pub solver_cmd: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario tree.
    GenTree(GenTreeArgs),
    /// Generate a base problem instance on a tree.
    GenInstance(GenInstanceArgs),
    /// Decide K-revisability of a binary policy.
    Check(CheckArgs),
    /// Solve a hypercube instance exactly.
    SolveHc(SolveHcArgs),
    /// Build a revision formulation, optionally on top of a base problem.
    Build(BuildArgs),
    /// Convert an MPS model to MPS or LP format.
    Export(ExportArgs),
    /// Solve an MPS model.
    Solve(SolveArgs),
    /// Run an experiment grid and write the report.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TreeKind {
    Btree,
    Stree,
    Path,
}

#[derive(Debug, Args)]
pub struct GenTreeArgs {
    #[arg(long, value_enum)]
    pub kind: TreeKind,
    /// Number of stages.
    #[arg(long = "T", value_name = "T")]
    pub stages: usize,
    /// Target node count (stree).
    #[arg(long, default_value_t = 50)]
    pub nodes: usize,
    /// Binomial trials per expansion (stree).
    #[arg(long, default_value_t = 3)]
    pub m: u64,
    /// Binomial success probability (stree).
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Relative tolerance on the node count (stree).
    #[arg(long, default_value_t = 0.1)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Strategic dimension per stage, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InstanceKind {
    Hc,
    Ls,
    Tp,
    Saghp,
}

#[derive(Debug, Args)]
pub struct GenInstanceArgs {
    #[arg(long, value_enum)]
    pub kind: InstanceKind,
    /// Tree file (hc, ls, tp).
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Smallest objective coefficient (hc).
    #[arg(long, default_value_t = -10, allow_hyphen_values = true)]
    pub lo: i32,
    /// Largest objective coefficient (hc).
    #[arg(long, default_value_t = 10, allow_hyphen_values = true)]
    pub hi: i32,
    /// Tools (tp).
    #[arg(long)]
    pub tools: Option<usize>,
    /// Operations (tp).
    #[arg(long)]
    pub operations: Option<usize>,
    /// Products (tp).
    #[arg(long)]
    pub products: Option<usize>,
    /// Weather pattern such as VIV (saghp).
    #[arg(long, default_value = "VIV")]
    pub pattern: String,
    /// Number of stages (saghp).
    #[arg(long = "T", value_name = "T", default_value_t = 4)]
    pub stages: usize,
    /// Number of flights (saghp).
    #[arg(long, default_value_t = 4)]
    pub flights: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// Policy file `{"x": {"nodeId": 0|1}}`.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long = "K", value_name = "K")]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct SolveHcArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long = "K", value_name = "K")]
    pub k: usize,
    /// Enumerate policies instead of running the DP.
    #[arg(long)]
    pub bruteforce: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelFormat {
    Mps,
    Lp,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// cp, cp+, cp++, st, stdp or path.
    #[arg(long)]
    pub formulation: krevise::formulations::FormulationKind,
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long = "K", value_name = "K")]
    pub k: usize,
    /// `none` or an instance file.
    #[arg(long, default_value = "none")]
    pub base: String,
    /// Keep one plan variable per strategic coordinate.
    #[arg(long)]
    pub vector: bool,
    #[arg(long, value_enum, default_value = "mps")]
    pub format: ModelFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// MPS file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub format: ModelFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    /// External when a command is configured, embedded otherwise.
    Auto,
    Embedded,
    External,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// MPS file.
    #[arg(long)]
    pub model: PathBuf,
    /// Solve the LP relaxation.
    #[arg(long)]
    pub relax: bool,
    #[arg(long, value_enum, default_value = "auto")]
    pub backend: BackendChoice,
    /// Seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub node_limit: Option<u64>,
    /// Also write an optimal solution as `name value` lines, the format the
    /// external solver bridge reads back.
    #[arg(long)]
    pub sol: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-instance values of the multistage, K-revision and partially
    /// adaptive models.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub backend: BackendChoice,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    log::info!("config: {cli:?}");

    match commands::run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else if !out.text.is_empty() {
                print!("{}", out.text);
                if !out.text.ends_with('\n') {
                    println!();
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.json {
                println!(
                    "{}",
                    serde_json::json!({"schema": commands::SCHEMA, "error": e.to_string()})
                );
            }
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
