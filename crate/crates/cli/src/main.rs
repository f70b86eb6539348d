use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use cfx_cli::dump::{distribution_records, write_distributions};
use cfx_cli::experiment::{append_csv, append_jsonl, run_experiment, write_timings, ExperimentSpec};
use cfx_cli::{best_non_selected, parse_index_list, solve_factual, CliError, Exit};
use cfx_core::explain::{metrics, model_free_bound, Metrics, SupportMode};
use cfx_core::factual::{solve_factual_enumerate, solve_factual_haase, FactualSolution};
use cfx_core::instance::InstanceError;
use cfx_core::lp::BranchOptions;
use cfx_core::{explain, generate, precompute, DesiredSpace, Explanation, GenerationConfig, Instance, SolverConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "cfx", version, about = "Relative counterfactual explanations for competitive facility location")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance.
    Generate(GenerateArgs),
    /// Compute a counterfactual explanation for an instance.
    Explain(ExplainArgs),
    /// Run an experiment grid and append a report.
    Experiment(ExperimentArgs),
    /// Compute the model-free lower bound on the regularizer.
    Bound(BoundArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Customers.
    #[arg(long)]
    n: usize,
    /// Candidate facilities.
    #[arg(long)]
    d: usize,
    /// Competitors.
    #[arg(long, default_value_t = 5)]
    e: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20.0)]
    box_side: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FactualChoice {
    Auto,
    Enumerate,
    Haase,
}

#[derive(Clone, Copy, ValueEnum)]
enum SupportChoice {
    Aggregated,
    PerCustomer,
}

impl From<SupportChoice> for SupportMode {
    fn from(s: SupportChoice) -> Self {
        match s {
            SupportChoice::Aggregated => SupportMode::Aggregated,
            SupportChoice::PerCustomer => SupportMode::PerCustomer,
        }
    }
}

#[derive(Clone, Debug)]
struct Indices(Vec<usize>);

fn parse_indices(s: &str) -> Result<Indices, String> {
    parse_index_list(s).map(Indices)
}

#[derive(Args)]
struct ProblemArgs {
    /// Instance file written by `generate`.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Number of facilities to open.
    #[arg(long)]
    budget: usize,
    /// Comma-separated candidates that must be open. Defaults to the best
    /// candidate left out by the factual solution.
    #[arg(long, value_parser = parse_indices)]
    force_open: Option<Indices>,
    /// Comma-separated candidates that must stay closed.
    #[arg(long, value_parser = parse_indices)]
    force_closed: Option<Indices>,
    #[arg(long, value_enum, default_value_t = FactualChoice::Auto)]
    factual: FactualChoice,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = SupportChoice::Aggregated)]
    support_mode: SupportChoice,
    /// Weight per-customer transport costs by customer weight.
    #[arg(long)]
    weighted_transport: bool,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Time limit for the outer search, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    multistarts: usize,
    #[arg(long, default_value_t = 2000)]
    max_iterations: usize,
    /// Explanation output (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-customer factual and counterfactual distributions (CSV).
    #[arg(long)]
    distributions: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment spec (JSON).
    spec: PathBuf,
    /// Report CSV; rows are appended.
    #[arg(long, default_value = "report.csv")]
    csv: PathBuf,
    /// Raw per-instance log (JSON lines); appended.
    #[arg(long, default_value = "raw.jsonl")]
    raw: PathBuf,
    /// Per-instance timing categories (CSV).
    #[arg(long)]
    timings: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Bound report output (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct FactualSummary {
    open: Vec<usize>,
    q_factual: f64,
    method: cfx_core::factual::FactualMethod,
}

#[derive(Serialize)]
struct ExplainOutput<'a> {
    schema_version: u32,
    factual: FactualSummary,
    desired: &'a DesiredSpace,
    metrics: Metrics,
    explanation: &'a Explanation,
}

#[derive(Serialize)]
struct BoundOutput<'a> {
    schema_version: u32,
    factual: FactualSummary,
    desired: &'a DesiredSpace,
    alpha: f64,
    bound: cfx_core::LowerBoundResult,
}

fn instance_error(e: InstanceError) -> CliError {
    let exit = match e {
        InstanceError::Config(_) => Exit::Usage,
        InstanceError::Validation(_) | InstanceError::Parse(_) => Exit::Infeasible,
        InstanceError::Io { .. } => Exit::Failure,
    };
    CliError::new(exit, e)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).context("writing JSON")?;
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<Exit, CliError> {
    let cfg = GenerationConfig { box_side: args.box_side, ..GenerationConfig::new(args.n, args.d, args.e, args.seed) };
    let inst = generate(&cfg).map_err(instance_error)?;
    inst.save(&args.out).map_err(instance_error)?;
    println!(
        "wrote {} ({} customers, {} candidates, {} competitors)",
        args.out.display(),
        inst.n_customers(),
        inst.n_candidates(),
        inst.n_competitors()
    );
    Ok(Exit::Ok)
}

struct Loaded {
    pre: cfx_core::PrecomputedUtilities,
    factual: FactualSolution,
    desired: DesiredSpace,
}

fn load_problem(p: &ProblemArgs) -> Result<Loaded, CliError> {
    let inst = Instance::load(&p.instance).map_err(instance_error)?;
    let pre = precompute(&inst);
    let factual = match p.factual {
        FactualChoice::Auto => solve_factual(&pre, p.budget)?,
        FactualChoice::Enumerate => solve_factual_enumerate(&pre, p.budget)?,
        FactualChoice::Haase => solve_factual_haase(&pre, p.budget, &BranchOptions::default())?,
    };
    let desired = match (&p.force_open, &p.force_closed) {
        (None, None) => best_non_selected(&pre, &factual),
        (open, closed) => {
            let list = |v: &Option<Indices>| v.as_ref().map(|i| i.0.clone()).unwrap_or_default();
            DesiredSpace::new(list(open), list(closed))
        }
    };
    desired.validate(pre.n_candidates(), p.budget)?;
    Ok(Loaded { pre, factual, desired })
}

fn solver_config(p: &ProblemArgs) -> SolverConfig {
    SolverConfig {
        epsilon: p.epsilon,
        support_mode: p.support_mode.into(),
        weighted_transport: p.weighted_transport,
        ..SolverConfig::new(p.alpha, p.lambda, p.budget)
    }
}

fn factual_summary(f: &FactualSolution) -> FactualSummary {
    FactualSummary { open: f.z0.open_indices(), q_factual: f.q_factual, method: f.method }
}

fn cmd_explain(args: ExplainArgs) -> Result<Exit, CliError> {
    let Loaded { pre, factual, desired } = load_problem(&args.problem)?;
    let cfg = SolverConfig {
        time_limit_s: args.time_limit,
        seed: args.seed,
        multistarts: args.multistarts,
        max_iterations: args.max_iterations,
        ..solver_config(&args.problem)
    };
    let ex = explain(&pre, &factual, &desired, &cfg)?;
    let m = metrics(&ex, &pre);
    if let Some(path) = &args.out {
        let out = ExplainOutput {
            schema_version: OUTPUT_SCHEMA_VERSION,
            factual: factual_summary(&factual),
            desired: &desired,
            metrics: m,
            explanation: &ex,
        };
        write_json(path, &out)?;
    }
    if let Some(path) = &args.distributions {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_distributions(&distribution_records(&pre, &factual, &ex), file).context("writing distributions")?;
    }
    println!("factual open   {:?}", factual.z0.open_indices());
    println!("explained open {:?}", ex.open_indices());
    println!("q_factual      {:.6}", m.q_factual);
    println!("q_new          {:.6}", m.q_new);
    println!("W2^2           {:.6}", m.w2);
    println!("sparsity       {:.4}", m.sparsity);
    println!(
        "objective      {:.6} (cost {:.6} + {} x {:.6})",
        ex.objective.total, ex.objective.j_cost, ex.lambda, ex.objective.w_cost
    );
    println!("lower bound    {:.6}  gap {:.4}", ex.lower_bound, ex.gap);
    println!("solve time     {:.3}s{}", m.solve_time_s, if ex.timed_out { " (time limit)" } else { "" });
    Ok(if ex.timed_out { Exit::TimeLimit } else { Exit::Ok })
}

fn cmd_experiment(args: ExperimentArgs) -> Result<Exit, CliError> {
    let spec = ExperimentSpec::load(&args.spec).map_err(|e| CliError::new(Exit::Usage, e))?;
    let out = run_experiment(&spec)?;
    append_csv(&args.csv, &out.rows)?;
    append_jsonl(&args.raw, &out.records)?;
    if let Some(path) = &args.timings {
        write_timings(path, &out.records)?;
    }
    for rec in out.records.iter().filter(|r| r.failed()) {
        eprintln!(
            "instance {} of cell N={} D={} r={} lambda={} failed: {}",
            rec.instance,
            rec.cell.n,
            rec.cell.d,
            rec.cell.r,
            rec.cell.lambda,
            rec.error.as_deref().unwrap_or_default()
        );
    }
    println!("{} rows appended to {}", out.rows.len(), args.csv.display());
    Ok(Exit::Ok)
}

fn cmd_bound(args: BoundArgs) -> Result<Exit, CliError> {
    let Loaded { pre, factual, desired } = load_problem(&args.problem)?;
    let cfg = solver_config(&args.problem);
    let bound = model_free_bound(&pre, &factual, &desired, &cfg, None)?;
    println!("global bound {:.9}", bound.value);
    for b in &bound.per_z {
        println!("  open {:?}: {:.9}", b.open, b.value);
    }
    if let Some(path) = &args.out {
        let out = BoundOutput {
            schema_version: OUTPUT_SCHEMA_VERSION,
            factual: factual_summary(&factual),
            desired: &desired,
            alpha: cfg.alpha,
            bound,
        };
        write_json(path, &out)?;
    }
    Ok(Exit::Ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Usage.code() } else { Exit::Ok.code() });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Bound(a) => cmd_bound(a),
    };
    match result {
        Ok(exit) => ExitCode::from(exit.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit.code())
        }
    }
}
