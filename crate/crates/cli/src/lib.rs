//! `kbpop` command-line driver.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod workspace;

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, configuration or input data (exit 2).
    Usage(String),
    /// Anything else (exit 1).
    Internal(anyhow::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Internal(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Internal(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "kbpop", version, about = "Knowledge-graph population with masked language models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, short = 'c')]
    pub config: PathBuf,
    /// Override a config field, e.g. `--set tuning.sticky=true`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Override the work directory.
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Disable data parallelism.
    #[arg(long)]
    pub sequential: bool,
    /// More logging (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split train into train2/dev2.
    Split {
        #[command(flatten)]
        common: Common,
    },
    /// Fetch silver pairs from the SPARQL endpoint.
    Harvest {
        #[command(flatten)]
        common: Common,
        /// Only use cached harvests.
        #[arg(long)]
        offline: bool,
    },
    /// Fine-tune the checkpoint family.
    Train {
        #[command(flatten)]
        common: Common,
        /// Print the plan and example counts without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Mine prompts from the corpus and select ensembles.
    Mine {
        #[command(flatten)]
        common: Common,
    },
    /// Generate candidates and predictions for a split.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dev")]
        split: String,
    },
    /// Tune per-relation thresholds (and sticky ratios) on prediction dumps.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        split: Option<String>,
        /// Search sticky ratios jointly with thresholds.
        #[arg(long)]
        sticky: bool,
    },
    /// Score predictions against gold.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dev")]
        split: String,
        /// Challenge-format predictions (default: the predict output for the split).
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Second prediction file rendered side by side.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        label: String,
        #[arg(long, default_value = "compare")]
        compare_label: String,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Split { common }
            | Command::Harvest { common, .. }
            | Command::Train { common, .. }
            | Command::Mine { common }
            | Command::Predict { common, .. }
            | Command::Tune { common, .. }
            | Command::Eval { common, .. } => common,
        }
    }
}

fn init_logging(common: &Common) {
    let level = match (common.quiet, common.verbose) {
        (true, _) => "error",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parse arguments, run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.command.common());
    match commands::dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
