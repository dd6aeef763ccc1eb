//! Command-line driver for the coupled vortex solvers.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_grid, ConfigError, Mode, RunConfig};

const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "csh-vortex", version, about = "Multivortex solutions of the coupled Chern-Simons-Higgs system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for one solution (planar, or the local minimizer on a torus).
    Solve(RunArgs),
    /// Find the local minimizer and a second, mountain-pass solution on a torus.
    Second(RunArgs),
    /// Solve across a list of coupling constants on a torus.
    Sweep(RunArgs),
    /// Re-check a binary field dump.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Grid size, overriding the config, e.g. 64x64.
    #[arg(long, value_parser = grid_arg)]
    grid: Option<(usize, usize)>,
    /// Coupling constant λ, overriding the config.
    #[arg(long)]
    lambda: Option<f64>,
    /// Seed for a random smooth perturbation of the periodic initial guess.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// A `.bin` dump, or a directory containing `fields.bin`.
    #[arg(long)]
    input: PathBuf,
    /// Directory for `summary.txt`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn grid_arg(s: &str) -> Result<(usize, usize), String> {
    parse_grid(s).ok_or_else(|| format!("expected M1xM2, got `{s}`"))
}

fn load(args: &RunArgs, mode: Mode) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| format!("reading {}: {e}", args.config.display()))?;
    let mut config = RunConfig::parse(&text, mode).map_err(|e| e.to_string())?;
    if let Some((m1, m2)) = args.grid {
        config = config.with_grid(m1, m2).map_err(|e| e.to_string())?;
    }
    if let Some(lambda) = args.lambda {
        config = config.with_lambda(lambda).map_err(|e| e.to_string())?;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Verify(args) => run::run_verify(&args.input, args.out.as_deref()),
        Command::Solve(args) | Command::Second(args) | Command::Sweep(args) => {
            let mode = match cli.command {
                Command::Solve(_) => Mode::Solve,
                Command::Second(_) => Mode::Second,
                _ => Mode::Sweep,
            };
            match load(args, mode) {
                Ok(config) => run::run(&config, &args.out, args.seed),
                Err(msg) => {
                    eprintln!("error: {msg}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
        }
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(run::EXIT_FAILURE as u8)
            }
        }
    }
}
