//! `ordcal`: evaluate, temperature-scale and train calibrated classifiers.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ordcal_core::Error;
use serde::Serialize;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (bad or missing flags)
  3  I/O error (file missing or unwritable)
  4  parse error in a logits or labels file
  5  shape error (column count, row-count mismatch, empty file)
  6  label out of range for the number of logit columns
  7  numerical failure (training divergence, failed gradient check,
     degenerate temperature fit)
  8  invalid parameter value (weights, temperature, bins, sizes)";

#[derive(Debug, Parser)]
#[command(name = "ordcal", version, about = "Calibration metrics, temperature scaling and ordinal-aware calibration losses", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report ECE, MCE, accuracy and NLL of external logits.
    #[command(after_help = EXIT_CODES)]
    Eval(EvalArgs),
    /// Fit a temperature on held-out logits by minimising NLL.
    #[command(name = "fit-temp", after_help = EXIT_CODES)]
    FitTemp(FitTempArgs),
    /// Write the reliability-diagram bin table.
    #[command(after_help = EXIT_CODES)]
    Reliability(ReliabilityArgs),
    /// Train on synthetic ordinal data and report test calibration.
    #[command(name = "train-demo", after_help = EXIT_CODES)]
    TrainDemo(TrainDemoArgs),
    /// Run the four-rung ablation: CE, CE+MDCA, CE+MDCA+TS, and the latter with temperature scaling.
    #[command(after_help = EXIT_CODES)]
    Ablation(AblationArgs),
    /// Compare analytic loss gradients with central finite differences.
    #[command(after_help = EXIT_CODES)]
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args, Serialize)]
struct InputArgs {
    /// Logits file with header `l0,...,l{K-1}`.
    #[arg(long)]
    logits: PathBuf,
    /// Labels file with header `label`.
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of equal-width confidence bins.
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Divide logits by this temperature before the softmax.
    #[arg(long)]
    temperature: Option<f64>,
    /// Also write the report document here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct FitTempArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ReliabilityArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Destination of the comma-separated bin table.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum LossArg {
    #[value(name = "ce")]
    #[serde(rename = "ce")]
    Ce,
    #[value(name = "focal")]
    #[serde(rename = "focal")]
    Focal,
    #[value(name = "ce+mdca")]
    #[serde(rename = "ce+mdca")]
    CeMdca,
    #[value(name = "ce+mdca+ts")]
    #[serde(rename = "ce+mdca+ts")]
    CeMdcaTs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ArchArg {
    Linear,
    Mlp1,
}

#[derive(Debug, Args, Serialize)]
struct SyntheticArgs {
    /// Number of ordinal classes.
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 613)]
    n_train: usize,
    #[arg(long, default_value_t = 315)]
    n_test: usize,
    /// Spacing of class means along the ordinal axis.
    #[arg(long, default_value_t = 1.5)]
    separation: f64,
    /// Fraction of the training split held out for temperature fitting.
    #[arg(long, default_value_t = 0.15)]
    val_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
struct OptimArgs {
    #[arg(long, value_enum, default_value_t = ArchArg::Mlp1)]
    arch: ArchArg,
    /// Hidden width of the one-hidden-layer model.
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0.8)]
    momentum: f64,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct TrainDemoArgs {
    #[arg(long, value_enum, default_value_t = LossArg::Ce)]
    loss: LossArg,
    /// Cross-entropy weight of a composite loss.
    #[arg(long)]
    alpha: Option<f64>,
    /// MDCA weight of a composite loss.
    #[arg(long)]
    beta: Option<f64>,
    /// Ordinal (soft TS) weight of a composite loss.
    #[arg(long)]
    gamma: Option<f64>,
    /// Focusing exponent of the focal loss.
    #[arg(long, default_value_t = 2.0)]
    focal_gamma: f64,
    /// Fit a temperature on the validation split and report the scaled test metrics.
    #[arg(long)]
    temp_scale: bool,
    #[command(flatten)]
    data: SyntheticArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AblationArgs {
    #[command(flatten)]
    data: SyntheticArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    /// Random instances per loss.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a command, carrying what decides the exit status.
#[derive(Debug)]
pub enum Failure {
    Core(Error),
    /// A computation ran but its outcome is unusable.
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(Error::Io { .. }) => 3,
            Failure::Core(Error::Parse { .. }) => 4,
            Failure::Core(Error::Shape { .. } | Error::Dimension(_)) => 5,
            Failure::Core(Error::LabelRange { .. }) => 6,
            Failure::Core(Error::Divergence { .. } | Error::NonFinite { .. }) => 7,
            Failure::Numerical(_) => 7,
            Failure::Core(Error::Parameter(_) | Error::Input(_)) => 8,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Numerical(m) => f.write_str(m),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Eval(a) => commands::eval(a),
        Command::FitTemp(a) => commands::fit_temp(a),
        Command::Reliability(a) => commands::reliability(a),
        Command::TrainDemo(a) => commands::train_demo(a),
        Command::Ablation(a) => commands::ablation(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
