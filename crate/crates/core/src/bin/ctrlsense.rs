use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ctrlsense_core::experiment::{self, ExperimentConfig, RawConfig, RunArtifacts};

#[derive(Parser)]
#[command(name = "ctrlsense", version, about = "Controlled sensing for anomaly detection: training, evaluation and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent per (rho, lambda) point and save checkpoints.
    Train(RunArgs),
    /// Evaluate a saved checkpoint over every rho x upsilon point.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate every sweep point, writing metrics and checkpoints.
    Sweep(RunArgs),
    /// Print a checkpoint's header and network shapes.
    InspectCheckpoint { path: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: RawConfig,
}

impl RunArgs {
    fn resolve(self) -> ctrlsense_core::Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::default(),
        };
        ExperimentConfig::resolve(base.overlay(self.overrides))
    }
}

fn report(out: &RunArtifacts) {
    eprintln!("config: {}", out.config.display());
    for c in &out.checkpoints {
        eprintln!("checkpoint: {}", c.display());
    }
    if let Some(m) = &out.metrics {
        eprintln!("metrics: {} ({} rows)", m.display(), out.rows.len());
        print!("{}", experiment::metrics_csv(&out.rows));
    }
}

fn run(cli: Cli) -> ctrlsense_core::Result<()> {
    match cli.command {
        Command::Train(args) => report(&experiment::run_train(&args.resolve()?)?),
        Command::Eval { run, checkpoint } => report(&experiment::run_eval(&run.resolve()?, &checkpoint)?),
        Command::Sweep(args) => report(&experiment::run_sweep(&args.resolve()?)?),
        Command::InspectCheckpoint { path } => println!("{}", experiment::inspect_checkpoint(&path)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
