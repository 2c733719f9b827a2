//! `pmp`: batch front end for the pontryagin library.
//!
//! Exit codes: 0 success, 1 a check failed, 2 bad input, 3 numerical
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pontryagin::pmp::TimeMode;

use pontryagin_cli::commands::{self, Options};

#[derive(Parser)]
#[command(name = "pmp", version, about = "Simulate, shoot and check optimal control problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fixed,
    Free,
}

#[derive(Args)]
struct Common {
    /// Problem file (TOML).
    #[arg(long)]
    problem: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Residual tolerance of checks and membership queries.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the time mode of the problem file.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the extended system under a control.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Control table; the `[control]` section when absent.
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Check the maximum principle along a control and adjoint.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        control: PathBuf,
        #[arg(long)]
        adjoint: PathBuf,
        /// Trajectory table whose first row gives the initial state.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Solve the boundary value problem by shooting.
    Shoot {
        #[command(flatten)]
        common: Common,
    },
    /// Build a perturbation cone and answer membership queries.
    Cones {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Sample the reachable set.
    Reach {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        control: Option<PathBuf>,
    },
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options {
            problem: c.problem,
            out: c.out,
            tol: c.tol,
            seed: c.seed,
            mode: c.mode.map(|m| match m {
                Mode::Fixed => TimeMode::Fixed,
                Mode::Free => TimeMode::Free,
            }),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { common, control } => commands::simulate_cmd(&common.into(), control.as_deref()),
        Command::Check {
            common,
            control,
            adjoint,
            trajectory,
        } => commands::check_cmd(&common.into(), &control, &adjoint, trajectory.as_deref()),
        Command::Shoot { common } => commands::shoot_cmd(&common.into()),
        Command::Cones { common, control } => commands::cones_cmd(&common.into(), control.as_deref()),
        Command::Reach { common, control } => commands::reach_cmd(&common.into(), control.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pmp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
