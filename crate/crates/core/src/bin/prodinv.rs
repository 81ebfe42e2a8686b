use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use prodinv::cli::{self, Command};

/// Production-inventory rate-control solvers and simulator.
#[derive(Parser)]
#[command(name = "prodinv", version, about)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// Key=value configuration file.
    #[arg(long, global = true, default_value = "prodinv.cfg")]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for the simulation commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Invariant measure of the configured fixed policy.
    SteadyState,
    /// Discounted value iteration.
    SolveVi,
    /// Discounted policy iteration.
    SolvePi,
    /// Average-cost policy iteration.
    SolveAvg,
    /// Pathwise averages of seeded trajectories under the configured policy.
    Simulate,
    /// Solve, then check simulated pathwise averages against the gain.
    Certify,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::SteadyState => Command::SteadyState,
            Cmd::SolveVi => Command::SolveVi,
            Cmd::SolvePi => Command::SolvePi,
            Cmd::SolveAvg => Command::SolveAvg,
            Cmd::Simulate => Command::Simulate,
            Cmd::Certify => Command::Certify,
        }
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let mut cfg = match cli::load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }

    match cli::run(&cfg, args.command.into(), args.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
