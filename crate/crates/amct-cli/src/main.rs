mod commands;
mod manifest;
mod schema;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Atom-motif contrastive transformer: vocabulary building, training,
/// evaluation, explanation and hyperparameter sweeps.
///
/// Exit codes: 0 ok, 2 input error, 3 vocabulary mismatch, 4 training diverged.
#[derive(Parser)]
#[command(name = "amct", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose every molecule of a dataset and write the motif vocabulary.
    BuildVocab {
        /// Dataset CSV with a `smiles` column followed by task columns.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rows of the frequency table printed to stdout.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Train a model and write a checkpoint, JSON-lines log and run manifest.
    Train {
        #[command(flatten)]
        common: TrainArgs,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// JSON-lines training log (default: checkpoint path + `.log.jsonl`).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Held-out data scored after every epoch. Without it the data file is
        /// split by the configured fractions.
        #[arg(long)]
        eval_data: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset and print the report as JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Vocabulary (default: the path recorded in the checkpoint).
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Predict with the readout head instead of the decoder.
        #[arg(long)]
        linear: bool,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate over a grid of loss weights; writes a CSV.
    Sweep {
        #[command(flatten)]
        common: TrainArgs,
        /// Comma-separated alignment weights.
        #[arg(long, value_delimiter = ',', required = true)]
        grid_a: Vec<f64>,
        /// Comma-separated contrastive weights.
        #[arg(long, value_delimiter = ',', required = true)]
        grid_b: Vec<f64>,
        /// Independent runs per cell.
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Data scored for each cell (default: held-out split of --data).
        #[arg(long)]
        eval_data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report the motifs each property attends to.
    Explain {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Normalized weight at or above which a motif is selected.
        #[arg(long, default_value_t = amct::model::DEFAULT_ALPHA)]
        alpha: f64,
        /// JSON report path.
        #[arg(long)]
        out: PathBuf,
        /// Plot-ready CSV (default: report path with a `.csv` extension).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Validate an output file against its schema.
    Check {
        #[arg(long, value_enum)]
        kind: schema::Kind,
        file: PathBuf,
    },
    /// Write the bundled planted-motif train and test CSVs.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AblateFlag {
    /// Drop the atom-motif alignment loss.
    NoAloss,
    /// Drop the motif contrastive loss.
    NoCloss,
    /// Skip the property-aware decoder.
    NoPaware,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Classification,
    Regression,
}

/// Options shared by `train` and `sweep`. Flags override the config file,
/// which overrides built-in defaults.
#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// JSON training config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<TaskArg>,
    /// Overrides the config seed; also read from AMCT_SEED.
    #[arg(long, env = "AMCT_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda_a: Option<f64>,
    #[arg(long)]
    lambda_b: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    /// May be repeated.
    #[arg(long, value_enum)]
    ablate: Vec<AblateFlag>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
