mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privleak::Error;

/// Train classifiers that hide a private attribute from feature-reading
/// adversaries, and audit how much they leak.
#[derive(Debug, Parser)]
#[command(name = "privleak", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic train/test split as CSV.
    GenData(GenDataArgs),
    /// Train a baseline or privacy-preserving classifier into a run directory.
    Train(TrainArgs),
    /// Train a fresh adversary on a frozen run's features.
    Attack(AttackArgs),
    /// Measure utility, privacy, and robustness of a run.
    Eval(EvalArgs),
    /// Train and evaluate one network per λ.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// `key = value` file; command-line flags win over its entries.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SyntheticArgs {
    /// Feature dimension.
    #[arg(long = "d")]
    pub d: Option<usize>,
    /// Consensual classes.
    #[arg(long = "D")]
    pub num_classes: Option<usize>,
    /// Private classes.
    #[arg(long = "K")]
    pub num_private: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub alpha_y: Option<f64>,
    #[arg(long)]
    pub alpha_s: Option<f64>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Entanglement of the private label with the task features, in [0, 1].
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// Data seed [env: PRIVLEAK_SEED; default 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for train.csv and test.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding train.csv and test.csv; synthetic data otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// Seed of the synthetic generator [default 42].
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Classifier layers, e.g. `32:relu,32:relu,16:relu,3:none`.
    #[arg(long)]
    pub layers: Option<String>,
    /// Tappable layer indices, e.g. `2,3`.
    #[arg(long)]
    pub taps: Option<String>,
    /// Hidden layers of the known adversary, e.g. `16:relu` (empty for linear).
    #[arg(long)]
    pub adversary: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    /// ce, confusion, or adversarial.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub tap: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Adversary updates per classifier update.
    #[arg(long)]
    pub adversary_steps: Option<usize>,
    /// Master seed [env: PRIVLEAK_SEED; default 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AttackerArgs {
    #[arg(long)]
    pub attack_seed: Option<u64>,
    #[arg(long)]
    pub attack_epochs: Option<usize>,
    #[arg(long)]
    pub attack_batch_size: Option<usize>,
    #[arg(long)]
    pub attack_lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Weight of the privacy term, in [0, 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Run directory to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Layer to attack [default: the run's tap].
    #[arg(long)]
    pub tap: Option<usize>,
    /// Hidden layers of the attacker [default 16:relu].
    #[arg(long)]
    pub unknown_adversary: Option<String>,
    #[command(flatten)]
    pub attacker: AttackerArgs,
    /// Attacker model file [default: <run>/attack-seed<S>-tap<T>.model].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Report of the original network; fills the robustness fields.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Hidden layers of the unknown adversary [default 16:relu].
    #[arg(long)]
    pub unknown_adversary: Option<String>,
    /// Source of the known-adversary figure: co-trained or retrained.
    #[arg(long)]
    pub known: Option<String>,
    /// Hidden layers of a retrained known adversary [default: the run's].
    #[arg(long)]
    pub adversary: Option<String>,
    #[command(flatten)]
    pub attacker: AttackerArgs,
    /// Report file [default: <run>/report.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Comma-separated λ grid.
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Hidden layers of the unknown adversary [default 16:relu].
    #[arg(long)]
    pub unknown_adversary: Option<String>,
    #[command(flatten)]
    pub attacker: AttackerArgs,
    /// CSV file to write besides stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 1,
        Error::Divergence { .. } | Error::Numeric(_) => 3,
        Error::Sweep { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => commands::gen_data(args),
        Command::Train(args) => commands::train(args),
        Command::Attack(args) => commands::attack(args),
        Command::Eval(args) => commands::eval(args),
        Command::Sweep(args) => commands::sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
