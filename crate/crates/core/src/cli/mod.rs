//! Command-line front end: experiment grids, reference solves, aggregator
//! audits and the complexity calculator.

pub mod experiment;
pub mod expr;
pub mod grid;
pub mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::aggregation::{audit_sweep, AuditSetup};
use crate::analysis::{
    complexity_bounds, solve_reference, ComplexityInputs, ComplexityMethod, DEFAULT_SOLVER_MAX_ITER,
};
use crate::data_io::{self, serialize_libsvm, synthetic};
use crate::objective::FiniteSum;

pub use experiment::{run_experiment, ExperimentOptions, ExperimentOutcome, SummaryRow};
pub use grid::{resolve_grid, DatasetConstants, DatasetSpec, ExperimentGrid, ResolvedRun};

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "BRLSVRG_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "brlsvrg",
    version,
    about = "Byzantine-robust variance-reduced optimization simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every configuration of a TOML grid.
    Run(RunArgs),
    /// Solve a dataset to high accuracy and print the reference solution.
    SolveRef(SolveRefArgs),
    /// Synthetic robustness audit of aggregation rules.
    AuditAgg(AuditArgs),
    /// Evaluate the complexity bounds and print JSON.
    Bounds(BoundsArgs),
    /// Write a synthetic dataset in LIBSVM format.
    GenSynthetic(GenArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub grid: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Overrides the grid's `output_dir` and $BRLSVRG_OUTPUT_DIR.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Replace the seed axis with this single seed.
    #[arg(long)]
    pub seed_override: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Only run configurations whose slug contains this text.
    #[arg(long)]
    pub filter: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SyntheticArg {
    MushroomsLike,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// LIBSVM file (plain or .gz).
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub synthetic: Option<SyntheticArg>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub subsample_seed: u64,
    /// Label value treated as the positive class.
    #[arg(long)]
    pub positive_label: Option<f64>,
}

impl DataArgs {
    fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            path: self.data.clone(),
            synthetic: self.synthetic.map(|s| match s {
                SyntheticArg::MushroomsLike => grid::SyntheticKind::MushroomsLike,
                SyntheticArg::Gaussian => grid::SyntheticKind::Gaussian,
            }),
            rows: self.rows,
            dim: self.dim,
            seed: self.seed,
            subsample: self.subsample,
            subsample_seed: self.subsample_seed,
            positive_label: self.positive_label,
            name: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveRefArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// ℓ2 weight as a number or expression over `L0`, `m`, `d`.
    #[arg(long, default_value = "L0/1000")]
    pub l2: String,
    #[arg(long, default_value_t = crate::analysis::DEFAULT_SOLVER_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_SOLVER_MAX_ITER)]
    pub max_iter: usize,
    /// Include x* in the output.
    #[arg(long)]
    pub print_x: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Aggregators in grid syntax, e.g. `gm+b2`, `krum+b1`, `mean`.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "mean,gm,cm,krum,gm+auto,cm+auto,krum+auto"
    )]
    pub aggregators: Vec<String>,
    #[arg(long, default_value_t = 13)]
    pub honest: usize,
    #[arg(long, default_value_t = 3)]
    pub byzantine: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 1e6)]
    pub byzantine_value: f64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BoundsMethod {
    BrLsvrg,
    ByrdSaga,
    ByzVrMarina,
    All,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub method: BoundsMethod,
    #[arg(long = "L")]
    pub l: f64,
    #[arg(long)]
    pub mu: f64,
    #[arg(long)]
    pub m: f64,
    #[arg(long)]
    pub n: f64,
    #[arg(long)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "mushrooms-like")]
    pub kind: SyntheticArg,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub output: PathBuf,
}

/// Parses `std::env::args` and runs the chosen subcommand.
pub fn main() -> anyhow::Result<ExitCode> {
    dispatch(Cli::parse())
}

pub fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::SolveRef(a) => cmd_solve_ref(a),
        Command::AuditAgg(a) => cmd_audit(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::GenSynthetic(a) => cmd_gen(a),
    }
}

fn cmd_run(a: RunArgs) -> anyhow::Result<ExitCode> {
    let grid = ExperimentGrid::load(&a.grid).with_context(|| format!("loading grid {}", a.grid.display()))?;
    let base_dir = a.grid.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    let output_dir = a
        .output_dir
        .or_else(|| {
            grid.output_dir
                .as_ref()
                .map(|d| if d.is_absolute() { d.clone() } else { base_dir.join(d) })
        })
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let opts = ExperimentOptions {
        output_dir,
        jobs: a.jobs,
        seed_override: a.seed_override,
        iterations_override: a.iterations,
        filter: a.filter,
        base_dir,
    };
    let outcome = run_experiment(&grid, &opts)?;
    let errors = outcome.error_count();
    eprintln!(
        "{} runs, {} errors; summary at {}",
        outcome.summary.len(),
        errors,
        outcome.output_dir.join("summary.csv").display()
    );
    for row in outcome.summary.iter().filter(|r| r.is_error()) {
        eprintln!("  {}: {}", row.slug, row.status);
    }
    Ok(if errors == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_solve_ref(a: SolveRefArgs) -> anyhow::Result<ExitCode> {
    if a.data.data.is_none() && a.data.synthetic.is_none() {
        bail!("pass --data <file> or --synthetic <kind>");
    }
    let grid_like = ExperimentGrid {
        datasets: vec![a.data.spec()],
        methods: vec![crate::engine::Method::BrLsvrg],
        attacks: vec!["none".into()],
        aggregators: vec!["mean".into()],
        batch_sizes: vec![grid::NumOrExpr::Num(1.0)],
        stepsizes: vec![grid::NumOrExpr::Num(1.0)],
        seeds: vec![0],
        iterations: 0,
        eval_every: 1,
        workers: 1,
        byzantine: 0,
        output_dir: None,
        switch_probability: grid::NumOrExpr::Num(1.0),
        l2: grid::NumOrExpr::Expr(a.l2.clone()),
        byrd_saga_aggregator: "gm".into(),
        lyapunov: Default::default(),
        record_timing: false,
        reference_tol: a.tol,
    };
    let (obj, constants) = experiment::build_objective(&grid_like, 0, std::path::Path::new(""))?;
    let sol = solve_reference(&obj, a.tol, a.max_iter)?;
    let mut out = json!({
        "dataset": constants.name,
        "content_hash": obj.dataset().content_hash(),
        "m": obj.num_components(),
        "dim": obj.dim(),
        "L": constants.lipschitz,
        "L0": constants.l0,
        "mu": constants.mu,
        "l2": constants.l2,
        "f_star": sol.f_star,
        "grad_norm": sol.grad_norm,
        "tol": sol.solver_tol,
        "iterations": sol.iterations,
    });
    if a.print_x {
        out["x_star"] = json!(sol.x_star);
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(a: AuditArgs) -> anyhow::Result<ExitCode> {
    let setup = AuditSetup {
        honest: a.honest,
        byzantine: a.byzantine,
        dim: a.dim,
        byzantine_value: a.byzantine_value,
    };
    let n = a.honest + a.byzantine;
    let mut results = Vec::new();
    for text in &a.aggregators {
        let spec = grid::parse_aggregator(text, a.byzantine, n)?;
        results.push(audit_sweep(&spec, setup, a.trials)?);
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({ "setup": setup, "results": results }))?
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bounds(a: BoundsArgs) -> anyhow::Result<ExitCode> {
    let inputs = ComplexityInputs {
        l: a.l,
        mu: a.mu,
        m: a.m,
        n: a.n,
        b: a.b,
        c: a.c,
        delta: a.delta,
        eps: a.eps,
    };
    let methods = match a.method {
        BoundsMethod::BrLsvrg => vec![ComplexityMethod::BrLsvrg],
        BoundsMethod::ByrdSaga => vec![ComplexityMethod::ByrdSaga],
        BoundsMethod::ByzVrMarina => vec![ComplexityMethod::ByzVrMarina],
        BoundsMethod::All => vec![
            ComplexityMethod::BrLsvrg,
            ComplexityMethod::ByrdSaga,
            ComplexityMethod::ByzVrMarina,
        ],
    };
    let reports = methods
        .into_iter()
        .map(|m| complexity_bounds(m, inputs))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{}", serde_json::to_string_pretty(&reports)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<ExitCode> {
    let ds = match a.kind {
        SyntheticArg::MushroomsLike => synthetic::mushrooms_like(a.rows.unwrap_or(synthetic::MUSHROOMS_ROWS), a.seed)?,
        SyntheticArg::Gaussian => {
            let rows = a.rows.context("--rows is required for gaussian data")?;
            let dim = a.dim.context("--dim is required for gaussian data")?;
            synthetic::gaussian(rows, dim, a.seed)?
        }
    };
    let text = serialize_libsvm(&ds);
    if a.output.extension().is_some_and(|e| e == "gz") {
        use std::io::Write;
        let file = std::fs::File::create(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
        let mut enc = flate2::write::GzEncoder::new(file, flate2::Compression::default());
        enc.write_all(text.as_bytes())?;
        enc.finish()?;
    } else {
        std::fs::write(&a.output, text).with_context(|| format!("writing {}", a.output.display()))?;
    }
    // round-trip check keeps the writer honest
    let back = data_io::load_libsvm(&a.output, &Default::default())?;
    if back.len() != ds.len() {
        bail!("wrote {} rows but read back {}", ds.len(), back.len());
    }
    eprintln!("wrote {} rows, dim {}, to {}", ds.len(), ds.dim(), a.output.display());
    Ok(ExitCode::SUCCESS)
}
