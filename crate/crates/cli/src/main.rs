use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use neyman_lab::{execute, Command, ExperimentConfig, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    SweepRegret,
    Coverage,
    VerifySigmoid,
    CheckSequence,
    Identities,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::SweepRegret => Command::SweepRegret,
            Cmd::Coverage => Command::Coverage,
            Cmd::VerifySigmoid => Command::VerifySigmoid,
            Cmd::CheckSequence => Command::CheckSequence,
            Cmd::Identities => Command::Identities,
        }
    }
}

/// Monte Carlo harness for Sigmoid-FTRL adaptive Neyman allocation.
#[derive(Debug, Parser)]
#[command(name = "neyman-lab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Experiment file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Horizons, comma separated.
    #[arg(long = "T", value_delimiter = ',', num_args = 1..)]
    horizons: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Emit JSON lines instead of CSV.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        horizons: cli.horizons,
        replications: cli.reps,
        seed: cli.seed,
        out: cli.out,
        workers: cli.workers,
        json: cli.json,
    };
    let command = Command::from(cli.command);
    let result = match &cli.config {
        Some(path) => ExperimentConfig::load(command, path, &overrides),
        None => ExperimentConfig::from_parts(command, None, std::path::Path::new("."), &overrides),
    }
    .and_then(|cfg| {
        let bytes = execute(&cfg, &|line: &str| eprintln!("{line}"))?;
        if !neyman_lab::commands::deliver(&cfg, &bytes)? {
            std::io::stdout().write_all(&bytes)?;
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("neyman-lab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
