//! `reident-ens`: train per-feature siamese embeddings, fuse them with
//! ensemble transforms, and evaluate rank-k retrieval under
//! subject-disjoint cross-validation.
//!
//! Progress and diagnostics go to stderr (level chosen by the
//! `REIDENT_ENS_LOG` environment variable: `error`, `info`, or `debug`);
//! results go to files in the output directory. The only data printed to
//! stdout is the divergence list of `compare`.

mod artifacts;
mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;

#[derive(Parser)]
#[command(
    name = "reident-ens",
    version,
    about = "Heterogeneous-ensemble re-identification experiments",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the cross-validated experiment described by a config file.
    Run(RunArgs),
    /// Run the experiment plus ablation analyses (leave-one-out deltas,
    /// pairwise improvement, optional embedding-width sweep).
    Ablate(AblateArgs),
    /// Generate a synthetic labelled corpus: PNG images plus manifest.csv.
    Synth(SynthArgs),
    /// Compare two run reports method by method at a tolerance.
    Compare(CompareArgs),
    /// Estimate the triplet-order correlation matrix of saved embedding
    /// dumps covering the same images.
    Correlate(CorrelateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for fold rotations. Results are identical at any
    /// thread count; only wall-clock time changes.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Root seed; overrides `settings.seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Zero out wall-clock fields so identical runs produce byte-identical
    /// report JSON.
    #[arg(long)]
    stable_output: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Skip the embedding-width sweep even if the config asks for one.
    #[arg(long)]
    skip_size_sweep: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory receiving `images/`, `manifest.csv`, and
    /// `synthetic_params.json`.
    #[arg(long)]
    out: PathBuf,
    /// Number of distinct subjects.
    #[arg(long, default_value_t = 50)]
    subjects: usize,
    /// Views generated per subject.
    #[arg(long, default_value_t = 5)]
    views: usize,
    /// Image width in pixels.
    #[arg(long, default_value_t = 128)]
    width: usize,
    /// Image height in pixels.
    #[arg(long, default_value_t = 96)]
    height: usize,
    /// Standard deviation of the additive per-pixel noise.
    #[arg(long, default_value_t = 8.0)]
    noise_sigma: f64,
    /// Largest horizontal wraparound shift a view may receive.
    #[arg(long, default_value_t = 4)]
    shift_max: usize,
    /// Seed of the corpus.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    /// First report.json.
    report_a: PathBuf,
    /// Second report.json.
    report_b: PathBuf,
    /// Largest accepted |difference| in mean accuracy per (method, rank).
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
}

#[derive(Args)]
struct CorrelateArgs {
    /// Embedding dump CSVs (at least two), one per model, covering the
    /// same images in the same order.
    #[arg(required = true)]
    dumps: Vec<PathBuf>,
    /// Directory receiving correlation.json and correlation.csv.
    #[arg(long)]
    out: PathBuf,
    /// Monte-Carlo triples drawn per model pair.
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    /// Seed of the triple draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("REIDENT_ENS_LOG", "info"),
    )
    .target(env_logger::Target::Stderr)
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => commands::cmd_run(args),
        Command::Ablate(args) => commands::cmd_ablate(args),
        Command::Synth(args) => commands::cmd_synth(args),
        Command::Compare(args) => commands::cmd_compare(args),
        Command::Correlate(args) => commands::cmd_correlate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
    }
}
