//! Command line laboratory for word-substitution attacks and balanced
//! adversarial training on a synthetic sentence-pair task.
//!
//! Configuration precedence, lowest to highest: built-in defaults, the
//! `--config` file, `--set KEY=VALUE` overrides, dedicated flags. Exit
//! codes: 0 on success, 1 for configuration or input problems, 2 for
//! failures during execution.

mod commands;
mod config;
mod errors;
mod manifest;
mod world;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{FlatConfig, RunConfig};
use crate::errors::CliResult;

#[derive(Parser)]
#[command(
    name = "bat-forge",
    version,
    about = "Word-substitution attacks and balanced adversarial training on a toy sentence-pair task"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic task: embeddings, lexicons, splits, oracle
    GenData(CommonArgs),
    /// Train one model under a regime and record per-epoch metrics
    Train(TrainArgs),
    /// Run one attack over the eval split of a trained checkpoint
    Attack(AttackArgs),
    /// Evaluate a checkpoint: accuracy, attack success rates, distances
    Eval(CheckpointArgs),
    /// Train every cell of a hyperparameter grid into one results table
    Sweep(CommonArgs),
    /// Project probe representations to 2D for plotting
    Project(CheckpointArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file holding a flat object of dotted keys
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for artifacts (config key `out_dir`)
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Master seed; every random stream derives from it
    #[arg(long)]
    seed: Option<u64>,
    /// Load data written by gen-data instead of regenerating it
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Override one config key, repeatable (example: train.margin=0.5)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// normal, smooth, bat_pair or bat_triplet
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Fickle distance weight for bat_pair
    #[arg(long)]
    alpha: Option<f64>,
    /// Obstinate hinge weight for bat_pair
    #[arg(long)]
    beta: Option<f64>,
    /// Contrastive weight for bat_triplet
    #[arg(long)]
    lambda: Option<f64>,
    /// Hinge margin, in [0, 2]
    #[arg(long)]
    margin: Option<f64>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// synonym, antonym or negation
    #[arg(long)]
    attack: Option<String>,
    /// Trained model to attack (config key `paths.checkpoint`)
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Count a flip as success only when the oracle condition also holds
    #[arg(long)]
    oracle_check: bool,
}

#[derive(Args)]
struct CheckpointArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained model to evaluate (config key `paths.checkpoint`)
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
}

/// Defaults, then file, then --set pairs, then the dedicated flags.
fn merge_common(common: &CommonArgs) -> CliResult<FlatConfig> {
    let mut flat = FlatConfig::defaults();
    if let Some(path) = &common.config {
        flat.merge_file(path)?;
    }
    for spec in &common.overrides {
        flat.set_pair(spec)?;
    }
    if let Some(dir) = &common.out_dir {
        flat.set("out_dir", json!(dir.to_string_lossy()))?;
    }
    if let Some(seed) = common.seed {
        flat.set("seed", json!(seed))?;
    }
    if let Some(dir) = &common.data_dir {
        flat.set("data.dir", json!(dir.to_string_lossy()))?;
    }
    Ok(flat)
}

type CommandFn = fn(&RunConfig, &FlatConfig) -> CliResult<()>;

fn dispatch(cli: &Cli) -> CliResult<()> {
    let (flat, run): (FlatConfig, CommandFn) = match &cli.command {
        Command::GenData(common) => (merge_common(common)?, commands::gen_data::run),
        Command::Sweep(common) => (merge_common(common)?, commands::sweep::run),
        Command::Train(args) => {
            let mut flat = merge_common(&args.common)?;
            if let Some(regime) = &args.regime {
                flat.set("train.regime", json!(regime))?;
            }
            if let Some(epochs) = args.epochs {
                flat.set("train.epochs", json!(epochs))?;
            }
            if let Some(batch_size) = args.batch_size {
                flat.set("train.batch_size", json!(batch_size))?;
            }
            if let Some(lr) = args.learning_rate {
                flat.set("train.learning_rate", json!(lr))?;
            }
            if let Some(alpha) = args.alpha {
                flat.set("train.alpha", json!(alpha))?;
            }
            if let Some(beta) = args.beta {
                flat.set("train.beta", json!(beta))?;
            }
            if let Some(lambda) = args.lambda {
                flat.set("train.lambda", json!(lambda))?;
            }
            if let Some(margin) = args.margin {
                flat.set("train.margin", json!(margin))?;
            }
            (flat, commands::train::run)
        }
        Command::Attack(args) => {
            let mut flat = merge_common(&args.common)?;
            if let Some(kind) = &args.attack {
                flat.set("attack.kind", json!(kind))?;
            }
            if let Some(ckpt) = &args.checkpoint {
                flat.set("paths.checkpoint", json!(ckpt.to_string_lossy()))?;
            }
            if args.oracle_check {
                flat.set("attack.oracle_check", json!(true))?;
            }
            (flat, commands::attack::run)
        }
        Command::Eval(args) | Command::Project(args) => {
            let mut flat = merge_common(&args.common)?;
            if let Some(ckpt) = &args.checkpoint {
                flat.set("paths.checkpoint", json!(ckpt.to_string_lossy()))?;
            }
            let run: fn(&RunConfig, &FlatConfig) -> CliResult<()> =
                if matches!(cli.command, Command::Eval(_)) {
                    commands::eval::run
                } else {
                    commands::project::run
                };
            (flat, run)
        }
    };
    let cfg = RunConfig::parse(&flat)?;
    run(&cfg, &flat)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
