//! `polyfilter` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or evaluation
//! error, 4 capacity error.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "polyfilter",
    version,
    about = "Polynomial graph-filter recommender"
)]
struct Cli {
    /// Key-value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a dataset into train/test/validation files.
    Split(DataArgs),
    /// Build the graph, filter, rank and evaluate.
    Run(RunArgs),
    /// Grid search selected on the validation split.
    Sweep(SweepArgs),
    /// Emit a filter's frequency response as CSV.
    Response(ResponseArgs),
    /// Time the pipeline over repeated runs.
    Bench(BenchArgs),
    /// Write a planted-cluster synthetic dataset.
    Generate(GenerateArgs),
    /// Print dataset statistics.
    Stats(DataArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct DataArgs {
    /// Full dataset, split in-process.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `adjacency` or `triplet`.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    test_frac: Option<f64>,
    #[arg(long)]
    val_frac: Option<f64>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct GraphArgs {
    #[arg(long)]
    alpha: Option<f64>,
    /// Hadamard exponent.
    #[arg(long)]
    s: Option<f64>,
    /// `dense` or `blocked`.
    #[arg(long)]
    storage: Option<String>,
    #[arg(long)]
    block_rows: Option<usize>,
    #[arg(long)]
    memory_budget_mb: Option<u64>,
    /// Divide the graph by its estimated spectral norm.
    #[arg(long)]
    rescale: bool,
    #[arg(long)]
    sparsify_below: Option<f64>,
    /// Graph cache file, reused when alpha, s and storage match. Keep one per
    /// training set: the cache does not fingerprint the training data.
    #[arg(long)]
    graph_cache: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct FilterArgs {
    /// linear, second_order, ideal_approx or custom.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated a_1..a_K for custom filters.
    #[arg(long, allow_hyphen_values = true)]
    coeffs: Option<String>,
    #[arg(long)]
    filter_file: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Precompute the dense filter matrix (small catalogs only).
    #[arg(long)]
    materialize: bool,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    filter: FilterArgs,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    ss: Option<String>,
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    betas: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ResponseArgs {
    #[command(flatten)]
    filter: FilterArgs,
    /// Grid points on [0, 1].
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    filter: FilterArgs,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long)]
    repetitions: Option<usize>,
    #[command(flatten)]
    synthetic: SyntheticArgs,
}

#[derive(Args, Debug, Default, Clone)]
pub struct SyntheticArgs {
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    in_cluster: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    synthetic: SyntheticArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let ctx = settings::Context::load(cli.config.as_deref(), cli.threads, cli.seed, cli.out)?;
    ctx.install_thread_pool()?;
    match cli.command {
        Command::Split(data) => commands::split(&ctx, &data),
        Command::Run(args) => commands::run(&ctx, &args),
        Command::Sweep(args) => commands::sweep(&ctx, &args),
        Command::Response(args) => commands::response(&ctx, &args),
        Command::Bench(args) => commands::bench(&ctx, &args),
        Command::Generate(args) => commands::generate(&ctx, &args),
        Command::Stats(data) => commands::stats(&ctx, &data),
    }
}
