//! `stagewise`: every step of the ensemble pseudo-labelling method as its own
//! subcommand, plus `run-pipeline` to chain them all from one config file.
//!
//! Exit status: 0 on success, 2 for usage errors (bad flags, invalid
//! configuration values), 3 for unreadable or malformed data, 4 when a
//! persisted artifact fails its integrity check. Errors are printed as a
//! single line `error[<kind>]: <message>`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "stagewise", version, about = "Ensemble teacher selection and multi-stage pseudo-label training for CTC models")]
struct Cli {
    /// Worker threads for per-utterance inference and decoding.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus the flags that override it.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Run configuration (TOML). Every key is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `run_id`.
    #[arg(long)]
    pub run_id: Option<String>,
    /// Overrides `max_stages`.
    #[arg(long)]
    pub max_stages: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the fully resolved configuration.
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate every corpus of a run as manifests.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train teacher `index` on its labelled source corpus.
    TrainTeacher {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        index: usize,
        /// Source training manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the n-gram LM on the transcripts of labelled manifests.
    TrainLm {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        /// Output ARPA file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune the LM weight and insertion bonus on labelled validation data.
    Tune {
        #[command(flatten)]
        config: ConfigArgs,
        /// Teacher checkpoints.
        #[arg(long, required = true, num_args = 1..)]
        models: Vec<PathBuf>,
        /// Labelled validation manifests.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        lm: PathBuf,
        /// Output JSON with the chosen `alpha`, `beta` and the full table.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a model over a corpus and write its posterior grids.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick, per utterance, the most confident of several grid files.
    Select {
        #[command(flatten)]
        config: ConfigArgs,
        /// One grid file per teacher, in teacher order.
        #[arg(long, required = true, num_args = 1..)]
        grids: Vec<PathBuf>,
        /// Selected grids.
        #[arg(long)]
        out: PathBuf,
        /// Per-utterance scores and choices (JSON lines).
        #[arg(long)]
        audit: PathBuf,
        /// Leave the blank out of each frame's maximum.
        #[arg(long)]
        exclude_blank: bool,
    },
    /// Beam-search decode grids into a label file.
    Decode(commands::DecodeArgs),
    /// Train a fresh student on pseudo-labels (or soft grids).
    TrainStudent {
        #[command(flatten)]
        config: ConfigArgs,
        /// Stage number; selects the student's seed.
        #[arg(long, default_value_t = 1)]
        stage: usize,
        /// Target training manifest.
        #[arg(long)]
        data: PathBuf,
        /// Hard pseudo-labels.
        #[arg(long, conflicts_with = "soft_grids", required_unless_present = "soft_grids")]
        labels: Option<PathBuf>,
        /// Teacher grids to match under KL divergence instead.
        #[arg(long)]
        soft_grids: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Test WER of a model without and with the LM.
    Evaluate(commands::EvaluateArgs),
    /// Run (or resume) the whole method.
    RunPipeline {
        #[command(flatten)]
        config: ConfigArgs,
        /// Parent directory of run directories.
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
        /// Stop after this stage, leaving the run resumable.
        #[arg(long)]
        halt_after_stage: Option<usize>,
    },
    /// Print a run's tables after re-checking them against its artifacts.
    Report {
        /// The run directory (`runs/<run_id>`).
        run_dir: PathBuf,
        /// Which table to print.
        #[arg(long, value_enum, default_value_t = commands::Table::Both)]
        table: commands::Table,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build_global()
        .map_err(anyhow::Error::from)
        .and_then(|()| commands::run(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = commands::classify(&e);
            eprintln!("error[{kind}]: {}", commands::one_line(&e));
            ExitCode::from(code)
        }
    }
}
