//! The `metaemb` command line: `align`, `train`, `eval`, `reproduce`,
//! `export` and `grad-check`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 some grid cells failed.

pub mod artifact;
mod commands;
pub mod config;
pub mod reference;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::embedding_io::TableFormat;
use crate::error::Error;
use crate::eval::Delimiter;
use config::{KeyValueFile, Overrides, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "metaemb", version, about = "Word meta-embeddings from several pretrained embedding sets")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Align sources on their shared vocabulary, l2-normalize, write the set and a manifest.
    Align {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Build every requested meta-embedding: meta tables, checkpoints, loss traces, summary.
    Train {
        #[command(flatten)]
        input: InputArgs,
        /// Aligned set written by `align` (instead of --sources).
        #[arg(long)]
        aligned: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Score meta tables on similarity datasets (scaled Spearman grid).
    Eval {
        /// Run configuration file; its [dataset] blocks are used unless --datasets is given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Meta tables (`name=path`, a path, or a directory of `.txt` tables).
        #[arg(long, value_delimiter = ',', required = true)]
        tables: Vec<String>,
        #[command(flatten)]
        data: DatasetArgs,
        /// Output directory for `report.txt` / `report.jsonl` (stdout only if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline over the six reference sources and datasets, with deltas to published scores.
    Reproduce {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Write the meta table of a saved model checkpoint.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Aligned set the model was trained on.
        #[arg(long)]
        aligned: PathBuf,
        /// Output table file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    GradCheck {
        /// Losses to check (default: all).
        #[arg(long, value_delimiter = ',')]
        loss: Vec<String>,
        /// Architectures: linear, tanh, tanh-log-softmax (default: all).
        #[arg(long, value_delimiter = ',')]
        arch: Vec<String>,
        /// Number of random networks per combination.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Args, Debug, Default)]
pub struct InputArgs {
    /// Run configuration file (flat key = value with [source]/[method]/[dataset] blocks).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Source embeddings as `name=path` (or a path named by its stem), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sources: Vec<String>,
    /// Source file format: plain, headered or auto.
    #[arg(long)]
    pub format: Option<TableFormat>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct GridArgs {
    /// Methods: conc, av, svd, 1ton, caeme, daeme, aaeme, tae, tae+y, mte (default: all).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Losses for autoencoder methods: mse, mae, kl, scp (default: all).
    #[arg(long, value_delimiter = ',')]
    pub loss: Vec<String>,
    /// Target sources (index or name) for tae, tae+y and mte (default: all).
    #[arg(long, value_delimiter = ',')]
    pub target: Vec<String>,
    /// Append the target vector to TAE meta-embeddings.
    #[arg(long)]
    pub concat_y: bool,
    /// Output rank of svd and 1ton [default: 200].
    #[arg(long)]
    pub rank: Option<usize>,
    /// Hidden layer size [default: 200].
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Dropout rate on hidden activations [default: 0.2].
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Minibatch size [default: 32].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Training epochs [default: 50].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// SGD learning rate [default: per loss: mse 0.05, mae 1.5, kl 0.6, scp 10].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seed for initialization, dropout and shuffling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initialize weights with std 1/sqrt(fan_in) instead of 1.
    #[arg(long)]
    pub init_scaled: bool,
    /// Worker threads for the grid (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct DatasetArgs {
    /// Similarity datasets as `name=path` (or a path named by its stem), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub datasets: Vec<String>,
    /// Dataset field separator: tab, comma or whitespace.
    #[arg(long)]
    pub delimiter: Option<Delimiter>,
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Partial(_) => EXIT_PARTIAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(e) => write!(f, "error: {e}"),
            CliError::Partial(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Data(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn run_config(
    input: &InputArgs,
    aligned: Option<PathBuf>,
    grid: Option<&GridArgs>,
    data: Option<&DatasetArgs>,
) -> CliResult<RunConfig> {
    let file = match &input.config {
        Some(path) => Some(KeyValueFile::load(path).map_err(|e| match e.root() {
            Error::Format { .. } => CliError::Usage(e.to_string()),
            _ => CliError::from(e),
        })?),
        None => None,
    };
    let base = input.config.as_ref().and_then(|p| p.parent()).map(PathBuf::from);
    let default_grid = GridArgs::default();
    let g = grid.unwrap_or(&default_grid);
    let default_data = DatasetArgs::default();
    let d = data.unwrap_or(&default_data);
    let flags = Overrides {
        sources: input.sources.clone(),
        format: input.format,
        aligned,
        methods: g.methods.clone(),
        losses: g.loss.clone(),
        targets: g.target.clone(),
        concat_y: g.concat_y,
        rank: g.rank,
        hidden: g.hidden,
        dropout: g.dropout,
        batch: g.batch,
        epochs: g.epochs,
        lr: g.lr,
        seed: g.seed,
        init_scaled: g.init_scaled,
        datasets: d.datasets.clone(),
        delimiter: d.delimiter,
        out: input.out.clone(),
        jobs: g.jobs,
    };
    Ok(RunConfig::resolve(file.as_ref().map(|f| (f, base.as_deref())), &flags)?)
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Align { input } => commands::align(&run_config(&input, None, None, None)?),
        Command::Train { input, aligned, grid } => commands::train(&run_config(&input, aligned, Some(&grid), None)?),
        Command::Eval { config, tables, data, out } => {
            let input = InputArgs {
                config,
                ..InputArgs::default()
            };
            let rc = run_config(&input, None, None, Some(&data))?;
            commands::eval(&tables, &rc.datasets, out.as_deref())
        }
        Command::Reproduce { input, grid, data } => {
            commands::reproduce(&run_config(&input, None, Some(&grid), Some(&data))?)
        }
        Command::Export { checkpoint, aligned, out } => commands::export(&checkpoint, &aligned, &out),
        Command::GradCheck {
            loss,
            arch,
            seeds,
            seed,
            step,
            tolerance,
        } => commands::grad_check(&loss, &arch, seeds, seed, step, tolerance),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
