//! `robustdrive`: perturbation, benchmark generation, FID, training, min-max
//! training, evaluation and sensitivity sweeps from the command line.
//!
//! Exit codes: 0 success, 1 usage/config/parse error, 2 IO or data error,
//! 3 numeric failure.
//!
//! Environment: `ROBUSTDRIVE_OUT` roots relative output paths;
//! `ROBUSTDRIVE_THREADS` caps worker threads; `RUST_LOG` sets log verbosity.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const ENV_OUT: &str = "ROBUSTDRIVE_OUT";
pub const ENV_THREADS: &str = "ROBUSTDRIVE_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "robustdrive",
    version,
    about = "Image-quality perturbations, FID severity and min-max robust training for steering regression",
    after_help = "Exit codes: 0 ok, 1 usage/config/parse, 2 IO/data, 3 numeric.\n\
Environment: ROBUSTDRIVE_OUT (root for relative output paths), ROBUSTDRIVE_THREADS (worker threads), RUST_LOG (log level).\n\
Run `robustdrive keys` to list configuration keys."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Flat key=value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Log progress at info level (RUST_LOG takes precedence).
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Apply a perturbation spec to one image or a whole dataset.
    Perturb {
        /// Input image, or a dataset manifest (`.csv`).
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Spec id, e.g. `blur:L3`, `chan:V:darker:alpha=0.5`, `comb:2`.
        #[arg(long)]
        spec: String,
        /// Output image, or output dataset directory in dataset mode.
        #[arg(long)]
        out: PathBuf,
        /// Master seed for noise-bearing specs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a benchmark tree of perturbed datasets.
    Benchgen {
        /// Base dataset manifest.
        #[arg(long)]
        base: PathBuf,
        /// Output root; datasets land in `<out>/<collection>/<spec-id>/`.
        #[arg(long)]
        out: PathBuf,
        /// Master seed (overrides bench.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Collection name (overrides bench.collection).
        #[arg(long)]
        collection: Option<String>,
    },
    /// Frechet distance between two datasets or feature files.
    Fid {
        /// Dataset manifest or feature file.
        a: PathBuf,
        /// Dataset manifest or feature file.
        b: PathBuf,
        /// Feature extractor id (overrides fid.extractor).
        #[arg(long)]
        extractor: Option<String>,
        /// Write the features of A to this file.
        #[arg(long, value_name = "FILE")]
        export_a: Option<PathBuf>,
        /// Write the features of B to this file.
        #[arg(long, value_name = "FILE")]
        export_b: Option<PathBuf>,
    },
    /// Render the procedural lane-following dataset.
    Synth {
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of frames (overrides synth.count).
        #[arg(long)]
        count: Option<usize>,
        /// Seed (overrides synth.seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Plain training on the train split of a dataset.
    Train {
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Epoch loss CSV (default: `<out>.log.csv`).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Min-max adversarial dataset-selection training.
    Minmax {
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Iteration log CSV (default: `<out>.minmax.csv`).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Save the parameters each selection was made with as `iter_<t>.bin` here.
        #[arg(long, value_name = "DIR")]
        snapshots: Option<PathBuf>,
    },
    /// Evaluate a model over a benchmark collection, grouped by scenario.
    Eval {
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Benchmark collection directory (`<out>/<collection>`).
        #[arg(long)]
        bench: PathBuf,
        /// Report CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Baseline report CSV for improvement and mCE columns.
        #[arg(long, conflicts_with = "baseline_model")]
        baseline_report: Option<PathBuf>,
        /// Baseline checkpoint, evaluated on the same tree.
        #[arg(long)]
        baseline_model: Option<PathBuf>,
    },
    /// MA-versus-FID sweep of one factor on the test split.
    Sweep {
        /// Model checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Dataset manifest.
        #[arg(long)]
        data: PathBuf,
        /// Factor family, e.g. `blur`, `noise`, `dist`, `chan:V:darker`.
        #[arg(long)]
        factor: String,
        /// Explicit spec ids instead of the five canonical levels (repeatable).
        #[arg(long = "spec")]
        specs: Vec<String>,
        /// Curve CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Also render the curve as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Report the N levels nearest to evenly spaced FID targets.
        #[arg(long, value_name = "N")]
        select: Option<usize>,
    },
    /// Render one or more curve CSVs as an MA-versus-FID SVG plot.
    Plot {
        /// Curve CSV files.
        #[arg(required = true)]
        curves: Vec<PathBuf>,
        /// Output SVG.
        #[arg(long)]
        out: PathBuf,
    },
    /// List configuration keys and their defaults.
    Keys,
}

/// Maps an error chain to the documented exit code.
fn exit_code(err: &anyhow::Error) -> u8 {
    fn lib_code(e: &robustdrive::Error) -> u8 {
        use robustdrive::Error as E;
        match e {
            E::Io { .. } | E::Decode { .. } | E::MissingFile(_) | E::MalformedRow { .. } | E::EmptyDataset(_) | E::UnresolvablePath(_) => 2,
            E::Numeric(_) | E::ZeroBaselineError(_) | E::InsufficientSamples { .. } => 3,
            E::Benchmark { source, .. } => lib_code(source),
            E::Contract(_) | E::Parse(_) | E::Unsupported(_) => 1,
        }
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<robustdrive::Error>() {
            return lib_code(e);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Ok(n) = std::env::var(ENV_THREADS) {
        match n.parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the thread pool: {e}");
                }
            }
            _ => {
                eprintln!("error: {ENV_THREADS} must be a positive integer, got {n:?}");
                return ExitCode::from(1);
            }
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
