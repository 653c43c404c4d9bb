use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use empchain::cli::{self, CliError, Experiment};

/// Chaining-based estimators and their verification experiments.
#[derive(Parser)]
#[command(name = "empchain", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Seed override (required here if the config has none).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the CSV and JSON reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Admissible-sequence shape and γ functionals of a class.
    ChainInfo(RunArgs),
    /// Exact bias, identity threshold and deviation bounds at one n.
    Estimate(RunArgs),
    /// Exact √n·sup-bias over an n grid.
    BiasSweep(RunArgs),
    /// Finite-dimensional CLT test against the exact bridge covariance.
    CltTest(RunArgs),
    /// Oscillation exceedance matrix over (δ, n).
    Oscillation(RunArgs),
    /// Truncation-level necessity sweep over b-rules.
    Necessity(RunArgs),
    /// Level-deviation coverage against the explicit-constant bound.
    Lemma21(RunArgs),
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run_experiment(experiment: Experiment, args: RunArgs) -> ExitCode {
    let config = match cli::RunConfig::from_path(&args.config) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    match cli::run(experiment, &config, args.seed, args.out) {
        Ok(outcome) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.summary).expect("summary serializes")
            );
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e @ (CliError::MissingSeed | CliError::BadConfig(_) | CliError::Parse(_))) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ChainInfo(args) => run_experiment(Experiment::ChainInfo, args),
        Command::Estimate(args) => run_experiment(Experiment::Estimate, args),
        Command::BiasSweep(args) => run_experiment(Experiment::BiasSweep, args),
        Command::CltTest(args) => run_experiment(Experiment::CltTest, args),
        Command::Oscillation(args) => run_experiment(Experiment::Oscillation, args),
        Command::Necessity(args) => run_experiment(Experiment::Necessity, args),
        Command::Lemma21(args) => run_experiment(Experiment::Lemma21, args),
        Command::Validate { config } => match cli::validate(&config) {
            Ok(diagnostics) => {
                if diagnostics.is_empty() {
                    println!("OK");
                } else {
                    for line in diagnostics {
                        println!("{line}");
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
    }
}
