use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{usage, CliResult};

#[derive(Parser, Debug)]
#[command(name = "genbench", about = "Learning the 1D Poisson equation: datasets, models, oracles, experiments")]
#[command(disable_version_flag = true, arg_required_else_help = true)]
struct Cli {
    /// Print version, revision and RNG identifier.
    #[arg(long)]
    version: bool,

    /// Flat TOML file of settings; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Replace an existing output directory.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads (default: physical cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset.
    Gen(GenArgs),
    /// Train one model on a dataset.
    Train(TrainArgs),
    /// Train on every family and evaluate on every family.
    Crosseval(CrossArgs),
    /// Probe a checkpoint with one-hot inputs.
    Probe(ProbeArgs),
    /// Finite-difference fits across grid sizes.
    Sweep(SweepArgs),
    /// Empirical versus predicted errors per polynomial order.
    Theory(TheoryArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Function class: FEM, Poly[p], Cos[p], Sine[p] (also poly3, sine:2, ...).
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub n_grid: Option<String>,
    #[arg(long)]
    pub n_examples: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Diffusion coefficient.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Overrides of the per-model training defaults.
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    /// Plain full-batch GD from zero at step 1/L (linear model).
    #[arg(long)]
    pub theorem: bool,
    /// adamw or gd.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub weight_decay: Option<String>,
    /// Constant learning rate.
    #[arg(long, conflicts_with_all = ["lr_start", "lr_end"])]
    pub lr: Option<String>,
    #[arg(long)]
    pub lr_start: Option<String>,
    #[arg(long)]
    pub lr_end: Option<String>,
    #[arg(long, conflicts_with = "steps")]
    pub epochs: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    /// Batch size, or "full".
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub hidden: Option<String>,
    /// zeros or fan-in.
    #[arg(long)]
    pub init: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    /// fd2, fd4, linear, deep-linear, mlp or deeponet.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CrossArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n_grid: Option<String>,
    /// Training seeds, e.g. 0,1,2,3,4 or 0..4.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub n_examples: Option<String>,
    /// Subset of families, e.g. FEM,Poly[3],Sine[2]; default all 25.
    #[arg(long)]
    pub families: Option<String>,
    #[arg(long)]
    pub data_seed: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    /// Allowed test/train MSE factor on nested spans.
    #[arg(long)]
    pub wiggle: Option<String>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Interpolation basis of the reference operator: hat or constant.
    #[arg(long)]
    pub basis: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Only fd is supported.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub grids: Option<String>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub n_examples: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TheoryArgs {
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub n_grid: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub n_examples: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub struct Common {
    pub config: Option<PathBuf>,
    pub force: bool,
}

fn run(cli: Cli) -> CliResult<()> {
    if cli.version {
        println!(
            "genbench {} (revision {}, rng {})",
            env!("CARGO_PKG_VERSION"),
            genbench::REVISION,
            genbench::rng::RNG_NAME
        );
        return Ok(());
    }
    let jobs = cli.jobs.unwrap_or_else(num_cpus::get_physical);
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| usage(format!("cannot start {jobs} worker threads: {e}")))?;
    let common = Common {
        config: cli.config,
        force: cli.force,
    };
    match cli.command {
        None => Err(usage("no subcommand given; see --help")),
        Some(Command::Gen(a)) => commands::gen(&common, a),
        Some(Command::Train(a)) => commands::train(&common, a),
        Some(Command::Crosseval(a)) => commands::crosseval(&common, a),
        Some(Command::Probe(a)) => commands::probe(&common, a),
        Some(Command::Sweep(a)) => commands::sweep(&common, a),
        Some(Command::Theory(a)) => commands::theory(&common, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
