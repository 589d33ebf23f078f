use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use eegtcn_core::Family;

mod commands;
mod error;

use error::CliError;

/// EEG-TCNet inference engine and static cost analyzer.
#[derive(Debug, Parser)]
#[command(name = "eegtcn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    #[value(name = "eeg_tcnet", alias = "eeg-tcnet")]
    EegTcnet,
    Eegnet,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::EegTcnet => Family::EegTcnet,
            FamilyArg::Eegnet => Family::Eegnet,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count parameters, MACs, peak feature-map memory and receptive field.
    Analyze {
        /// Hyperparameter JSON document.
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in configuration: `fixed`, `eeg_tcnet:<subject>` or `eegnet:<subject>`.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_enum, default_value = "eeg_tcnet")]
        family: FamilyArg,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
        /// Bytes per stored activation element.
        #[arg(long, default_value_t = 1)]
        bytes_per_element: u64,
    },
    /// Receptive field of the TCN for a kernel size and block count.
    Rfs {
        #[arg(long)]
        kt: usize,
        #[arg(long)]
        layers: u32,
        /// Required minimum, usually the pooled sequence length.
        #[arg(long)]
        min: Option<u64>,
    },
    /// Classify every trial of an ETRL file.
    Infer {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        trials: PathBuf,
        /// JSON file with per-channel `mean` and `std`.
        #[arg(long)]
        standardize_stats: Option<PathBuf>,
        /// Run simulated 8-bit inference.
        #[arg(long)]
        quantized: bool,
        /// Calibration trials, needed with --quantized on a float container.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Accuracy, kappa and confusion matrices, one subject per flag pair.
    Eval {
        /// Prediction file (infer output or one class per line).
        #[arg(long)]
        pred: Vec<PathBuf>,
        /// ETRL file holding the labels for the matching --pred.
        #[arg(long)]
        truth: Vec<PathBuf>,
        /// Weight container; one for all --trials or one per --trials.
        #[arg(long)]
        weights: Vec<PathBuf>,
        #[arg(long)]
        trials: Vec<PathBuf>,
        #[arg(long)]
        standardize_stats: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
    /// Write an int8 ETCW container with calibrated activation ranges.
    Quantize {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        standardize_stats: Option<PathBuf>,
    },
    /// Dump the header and manifest of an ETCW or ETRL file.
    Inspect {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: OutputFormat,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Analyze {
            config,
            preset,
            family,
            format,
            bytes_per_element,
        } => commands::analyze(config.as_deref(), preset.as_deref(), family.into(), format, bytes_per_element),
        Command::Rfs { kt, layers, min } => commands::rfs(kt, layers, min),
        Command::Infer {
            weights,
            trials,
            standardize_stats,
            quantized,
            calibration,
            format,
        } => commands::infer(&commands::InferArgs {
            weights: &weights,
            trials: &trials,
            stats: standardize_stats.as_deref(),
            quantized,
            calibration: calibration.as_deref(),
            format,
        }),
        Command::Eval {
            pred,
            truth,
            weights,
            trials,
            standardize_stats,
            format,
        } => commands::eval(&pred, &truth, &weights, &trials, standardize_stats.as_deref(), format),
        Command::Quantize {
            weights,
            calibration,
            out,
            standardize_stats,
        } => commands::quantize(&weights, &calibration, &out, standardize_stats.as_deref()),
        Command::Inspect { file, format } => commands::inspect(&file, format),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
