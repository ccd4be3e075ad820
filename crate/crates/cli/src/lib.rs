//! Command-line driver: partitioning, federated training, unlearning,
//! evaluation and embedding export.
//!
//! Exit codes are 0 on success, 1 for usage or configuration errors and 2
//! for everything that goes wrong at run time.

mod evaluate;
mod export;
mod io;
mod partition;
mod train;
mod unlearn;

use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use kgfed::config::{ExperimentConfig, Preset};

pub use export::{export_csv, import_csv};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] kgfed::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use kgfed::Error as E;
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(E::Config(_) | E::InvalidProportion(_) | E::InvalidMode(_) | E::InvalidModel(_)) => 1,
            CliError::Core(E::InvalidClusterCount { .. }) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "kgfed", version, about = "Federated knowledge graph embedding with unlearning")]
pub struct Cli {
    /// Worker threads for per-client training and evaluation.
    #[arg(long, global = true, env = "KGFED_WORKERS", default_value_t = 1)]
    pub workers: usize,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Spectral,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Full,
    Desk,
}

/// Configuration sources shared by `train` and `unlearn`, applied in the
/// order preset, file, `--set`.
#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,

    /// Flat `key = value` file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Override one key, e.g. `--set lr=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a triple file into relation-disjoint client shards.
    Partition {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, short)]
        k: usize,
        #[arg(long, value_enum, default_value = "spectral")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a federation (or a baseline) on partitioned shards.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory written by `partition`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the run directory's latest checkpoint.
        #[arg(long)]
        resume: bool,
        /// Also keep a checkpoint of every evaluation.
        #[arg(long)]
        snapshots: bool,
    },
    /// Forget a sample of training triples from a trained fedlu run.
    Unlearn {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        proportion: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Unlearning clients (default: all).
        #[arg(long, value_delimiter = ',')]
        clients: Option<Vec<usize>>,
        /// Skip the retrain-from-scratch baseline.
        #[arg(long)]
        no_retrain: bool,
        /// Output directory (default: `<run>/unlearn`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved checkpoint.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Checkpoint directory (default: `<run>/checkpoints/best`).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the metrics as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one embedding table as CSV.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        /// `label<TAB>id` dump naming the rows.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl ConfigArgs {
    pub fn resolve(&self, base: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
        let mut config = match (base, self.preset) {
            (_, Some(PresetArg::Desk)) => ExperimentConfig::preset(Preset::Desk),
            (_, Some(PresetArg::Full)) => ExperimentConfig::preset(Preset::Full),
            (Some(base), None) => base,
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(path) = &self.config {
            config.apply_text(&io::read(path)?)?;
        }
        let mut problems = Vec::new();
        for kv in &self.overrides {
            match kv.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = config.set(k, v) {
                        problems.push(e);
                    }
                }
                None => problems.push(format!("--set {kv}: expected KEY=VALUE")),
            }
        }
        if !problems.is_empty() {
            return Err(kgfed::Error::Config(problems).into());
        }
        Ok(config)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global();
    match cli.command {
        Command::Partition { input, k, method, seed, out } => partition::run(&input, k, method, seed, &out),
        Command::Train { config, mode, seed, data, out, resume, snapshots } => {
            let mut c = config.resolve(None)?;
            if let Some(m) = mode {
                c.set("mode", &m).map_err(|e| kgfed::Error::Config(vec![e]))?;
            }
            if let Some(s) = seed {
                c.seed = s;
            }
            if let Some(d) = data {
                c.data_dir = d;
            }
            if let Some(o) = out {
                c.out_dir = o;
            }
            train::run(&c, resume, snapshots)
        }
        Command::Unlearn { config, run, proportion, seed, clients, no_retrain, out } => {
            let opts = unlearn::Options { proportion, seed, clients, retrain: !no_retrain, out };
            unlearn::run(&run, &config, opts)
        }
        Command::Evaluate { run, checkpoint, split, out } => evaluate::run(&run, checkpoint.as_deref(), &split, out.as_deref()),
        Command::Export { checkpoint, labels, out } => export::run(&checkpoint, labels.as_deref(), &out),
    }
}
