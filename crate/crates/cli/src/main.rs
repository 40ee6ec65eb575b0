mod artifacts;
mod commands;
mod config;

use artifacts::SolveMode;
use clap::{Parser, Subcommand, ValueEnum};
use config::ConfigArgs;
use rcopf::acpf::ScenarioLabel;
use std::path::PathBuf;
use std::process::ExitCode;

/// Robust SOC-relaxed ACOPF studies.
///
/// Exit codes: 0 success, 1 input or I/O error, 2 infeasible or unbounded,
/// 3 numerical failure, 4 in-range violations found.
#[derive(Debug, Parser)]
#[command(name = "rcopf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ValidationMode {
    InRange,
    OutOfRange,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the deterministic or robust convexified ACOPF.
    Solve {
        #[arg(long, value_enum, default_value = "robust")]
        mode: SolveMode,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Monte Carlo robustness check of a solution's setpoints.
    Validate {
        /// Solution JSON written by `solve`, or bare setpoints.
        #[arg(long)]
        setpoints: PathBuf,
        #[arg(long, value_enum, default_value = "in-range")]
        mode: ValidationMode,
        /// Setpoints to report the largest setpoint difference against.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Convert a MATPOWER case to the native JSON schema.
    Convert {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        quadratic_tangent: bool,
    },
    /// Merge solution and validation artifacts into a comparison table (CSV).
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Solve { mode, config } => commands::cmd_solve(&config, mode),
        Command::Validate {
            setpoints,
            mode,
            reference,
            config,
        } => {
            let mode = match mode {
                ValidationMode::InRange => ScenarioLabel::InRange,
                ValidationMode::OutOfRange => ScenarioLabel::OutOfRange,
            };
            commands::cmd_validate(&config, &setpoints, mode, reference.as_deref())
        }
        Command::Convert {
            input,
            output,
            quadratic_tangent,
        } => commands::cmd_convert(&input, output.as_deref(), quadratic_tangent),
        Command::Report { inputs, output } => commands::cmd_report(&inputs, output.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::EXIT_INPUT)
        }
    }
}
