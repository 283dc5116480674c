//! `stormc`: run, plan, and verify compositional-optimizer experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stormc_cli::commands::{cmd_bench, cmd_gradcheck, cmd_plan, cmd_run, cmd_verify, Suite};
use stormc_cli::config::ProblemKind;
use stormc_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "stormc",
    version,
    about = "Variance-reduced compositional optimization harness",
    after_help = "Exit codes: 0 success, 1 config error, 2 numerical failure, 3 verification failure.\n\
                  The STORMC_OUT_DIR environment variable overrides the configured output directory;\n\
                  the --out flag overrides both."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment; one metrics CSV per (algorithm, seed).
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Count diagnostic oracle passes in the IFO column.
        #[arg(long)]
        include_diagnostics_ifo: bool,
    },
    /// Resolve and print a parameter plan, its feasibility, and its cost.
    Plan {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Emit machine-readable JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Validate analytic gradients against finite differences.
    Gradcheck {
        /// Check the problem of this experiment config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Check this problem at its desk-scale defaults.
        #[arg(long, value_enum)]
        problem: Option<ProblemKind>,
        /// Generator and evaluation-point seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of seeded evaluation points.
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        /// Maximum accepted relative error.
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
    },
    /// Run an algorithm comparison and aggregate quartile bands by IFO.
    Bench {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Count diagnostic oracle passes in the IFO column.
        #[arg(long)]
        include_diagnostics_ifo: bool,
    },
    /// Run a pinned-seed verification suite.
    Verify {
        /// Which suite to run.
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            include_diagnostics_ifo,
        } => cmd_run(&config, seed, out, include_diagnostics_ifo),
        Command::Plan { config, json } => cmd_plan(&config, json),
        Command::Gradcheck {
            config,
            problem,
            seed,
            points,
            step,
            tolerance,
        } => cmd_gradcheck(config.as_deref(), problem, seed, points, step, tolerance),
        Command::Bench {
            config,
            seed,
            out,
            include_diagnostics_ifo,
        } => cmd_bench(&config, seed, out, include_diagnostics_ifo),
        Command::Verify { suite } => cmd_verify(suite),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
