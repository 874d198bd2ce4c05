//! `d2d`: command-line front end for D2D sharing trace analytics.
//!
//! Exit codes: 0 success, 1 usage error, 2 input or format error,
//! 3 internal invariant violation.

mod commands;
mod io;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use d2d_core::influence::SeedStrategy;
use d2d_core::predictor::Loss;
use d2d_core::trace::Tier;
use d2d_core::traffic::DEFAULT_WINDOW_SECONDS;

use crate::io::{CliResult, Failure, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(name = "d2d", version, about = "D2D content-sharing trace analytics")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs). Outputs do not
    /// depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic trace from a generator config.
    Generate(GenerateArgs),
    /// Parse an event log and print or write its summary.
    Ingest(IngestArgs),
    /// Partition users into encounter groups.
    Groups(GroupsArgs),
    /// Per-group clustering and path statistics.
    Metrics(MetricsArgs),
    /// Fit a discrete power law to a group-size histogram.
    Fit(FitArgs),
    /// Redundant traffic per time window and category.
    Redundancy(RedundancyArgs),
    /// Choose one seed user per group from the first part of the trace.
    Seed(SeedArgs),
    /// Replay propagation from per-group seeds over the second half.
    Propagate(PropagateArgs),
    /// Train and evaluate pair predictors over feature-family subsets.
    Predict(PredictArgs),
    /// Write the pair feature dataset as CSV.
    Dataset(DatasetArgs),
    /// Run every stage and write a manifest of output digests.
    Pipeline(PipelineArgs),
    /// Bundle stage outputs into plot-ready tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Generator config (JSON); defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's rng_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    /// Relationship tiers (`user_a,user_b,tier`).
    #[arg(long)]
    pub relationships: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Skip malformed lines instead of failing on the first one.
    #[arg(long)]
    pub lenient: bool,
    /// Summary JSON path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GroupsArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Size histogram CSV; defaults to `group_sizes.csv` next to `--out`.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// `size,count` histogram CSV.
    #[arg(long)]
    pub histogram: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub xmin: u64,
    /// Fit JSON path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RedundancyArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Window length in seconds.
    #[arg(long, default_value_t = DEFAULT_WINDOW_SECONDS)]
    pub window: i64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SeedArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Fraction of the time span used to build sharing forests.
    #[arg(long, default_value_t = 0.5)]
    pub split: f64,
    #[arg(long, default_value = "tree_root", value_parser = parse_strategy)]
    pub strategy: SeedStrategy,
    #[arg(long)]
    pub relationships: Option<PathBuf>,
    /// Seed for the random strategy.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PropagateArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value = "tree_root", value_parser = parse_strategy)]
    pub strategy: SeedStrategy,
    /// Number of groups to sample.
    #[arg(long, default_value_t = 100)]
    pub sample: usize,
    #[arg(long, default_value_t = 5)]
    pub min_size: usize,
    /// Transmission probability per encounter.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Lowest relationship tier allowed to exchange content.
    #[arg(long, default_value = "stranger", value_parser = parse_tier)]
    pub threshold: Tier,
    #[arg(long)]
    pub relationships: Option<PathBuf>,
    /// Seed for group sampling and transmission draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Summary JSON; defaults to `coverage_summary.json` next to `--out`.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub relationships: Option<PathBuf>,
    #[arg(long, default_value = "logistic", value_parser = parse_loss)]
    pub loss: Loss,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub relationships: Option<PathBuf>,
    /// Training pairs CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Test pairs CSV.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Pipeline config (JSON); defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "d2d-out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub redundancy: PathBuf,
    /// `size,count` group-size histogram.
    #[arg(long)]
    pub histogram: PathBuf,
    #[arg(long)]
    pub coverage: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_strategy(s: &str) -> Result<SeedStrategy, String> {
    s.parse().map_err(|e: d2d_core::Error| e.to_string())
}

fn parse_tier(s: &str) -> Result<Tier, String> {
    s.parse().map_err(|e: d2d_core::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<Loss, String> {
    s.parse().map_err(|e: d2d_core::Error| e.to_string())
}

fn execute(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::invariant(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Groups(a) => commands::groups(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Fit(a) => commands::fit(a),
        Command::Redundancy(a) => commands::redundancy(a),
        Command::Seed(a) => commands::seed(a),
        Command::Propagate(a) => commands::propagate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Dataset(a) => commands::dataset(a),
        Command::Pipeline(a) => pipeline::run(a),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
