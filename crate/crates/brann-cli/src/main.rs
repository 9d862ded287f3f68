//! `brann` — batch front end for the tool-wear training library.
//!
//! Every command resolves its inputs into a canonical TOML echo, hashes it,
//! and writes all artifacts under `<out>/<command>-<hash>`, so reruns with
//! the same configuration land in the same directory and are refused unless
//! `--force` is passed. Outputs are plain CSV/text; nothing touches the
//! network.

mod commands;
mod config;
mod model;
mod pipeline;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Command-line failure with the documented exit-code mapping:
/// 2 = configuration/usage error, 3 = data error, 4 = training abort.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(brann::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(e) => match e {
                brann::Error::Shape(_) | brann::Error::InvalidInput(_) | brann::Error::State(_) => 2,
                brann::Error::Schema(_) | brann::Error::Data(_) | brann::Error::Io(_) => 3,
                brann::Error::TrainingAbort(_) => 4,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<brann::Error> for CliError {
    fn from(e: brann::Error) -> Self {
        CliError::Lib(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "brann", version, about = "Tool-wear model training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run-configuration TOML (train/sweep; optional manifest source for prepare).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for sweeps and ranking. 0 = all cores, 1 = serial.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Root directory for run output (default: the configured `out`, else `runs`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Wipe and recreate an existing run directory instead of refusing.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a feature CSV from a raw-signal manifest.
    Prepare {
        /// Manifest TOML; falls back to the config's `manifest` entry.
        manifest: Option<PathBuf>,
    },
    /// Train per the run configuration; artifacts land in one run directory.
    Train {
        /// Independent repeats (split/init seeds seed+0..r); overrides the config.
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Train every point of a grid and tabulate train/test metrics.
    Sweep {
        /// Replace the config's [sweep] axes with a canned study:
        /// hidden | transfer | ratio | algorithm.
        #[arg(long)]
        preset: Option<String>,
        /// Repeats per grid point; overrides the config.
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Metrics of a saved model on a feature CSV (targets required).
    Evaluate {
        /// Run directory holding checkpoint.net and scaler.csv.
        #[arg(long)]
        model: PathBuf,
        features: PathBuf,
    },
    /// Predictions of a saved model on a feature CSV; absent feature
    /// columns are mean-imputed from the training fit.
    Predict {
        #[arg(long)]
        model: PathBuf,
        features: PathBuf,
    },
    /// Rank feature columns by minimum-redundancy maximum-relevance.
    Rank {
        features: PathBuf,
        /// Validate the CSV against a named schema instead of reading it generically.
        #[arg(long)]
        schema: Option<String>,
        /// Target column (default: the schema's first target, else the last column).
        #[arg(long)]
        target: Option<String>,
        /// Discretization bins (default: max(2, floor(sqrt(rows)))).
        #[arg(long)]
        bins: Option<usize>,
        /// mid (difference) or miq (quotient).
        #[arg(long, default_value = "mid")]
        criterion: String,
    },
    /// Threshold model predictions into broken/unbroken and score against truth.
    Classify {
        #[arg(long)]
        model: PathBuf,
        features: PathBuf,
        /// Wear threshold in target units; strictly above = broken.
        #[arg(long, default_value_t = 0.6)]
        threshold: f64,
        /// Target column to classify (default: the model's first target).
        #[arg(long)]
        target: Option<String>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let globals = commands::Globals {
        config: cli.config,
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out,
        force: cli.force,
    };
    match cli.command {
        Command::Prepare { manifest } => commands::prepare(&globals, manifest.as_deref()),
        Command::Train { repeats } => commands::train(&globals, repeats),
        Command::Sweep { preset, repeats } => {
            commands::sweep(&globals, preset.as_deref(), repeats)
        }
        Command::Evaluate { model, features } => commands::evaluate(&globals, &model, &features),
        Command::Predict { model, features } => commands::predict(&globals, &model, &features),
        Command::Rank {
            features,
            schema,
            target,
            bins,
            criterion,
        } => commands::rank(
            &globals,
            &features,
            schema.as_deref(),
            target.as_deref(),
            bins,
            &criterion,
        ),
        Command::Classify {
            model,
            features,
            threshold,
            target,
        } => commands::classify(&globals, &model, &features, threshold, target.as_deref()),
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
