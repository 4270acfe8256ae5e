//! `rgm`: generate, train on, solve, and benchmark weighted graph matching
//! instances from the command line.
//!
//! Exit codes: 0 success, 2 usage or validation failure, 3 partial failure
//! (some inputs processed, some not).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

#[derive(Parser)]
#[command(name = "rgm", version, about = "Deep-RL solver for pairwise graph matching")]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic point-set matching instances.
    Gen(commands::gen::GenArgs),
    /// Train an agent on a set of instances.
    Train(commands::train::TrainArgs),
    /// Solve instances with a trained checkpoint.
    Solve(commands::solve::SolveArgs),
    /// Aggregate solver quality over instance suites.
    Bench(commands::bench::BenchArgs),
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let file = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(err) => {
            eprintln!("rgm: {err:#}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => commands::gen::run(args, &file),
        Command::Train(args) => commands::train::run(args, &file),
        Command::Solve(args) => commands::solve::run(args, &file),
        Command::Bench(args) => commands::bench::run(args, &file),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("rgm: {err:#}");
            ExitCode::from(2)
        }
    }
}
