use std::path::PathBuf;
use std::process::ExitCode;

use acon::app::{cmd_check, cmd_compare, cmd_run, Options};
use acon::Scheme;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "acon", version, about = "Ternary phase-field simulator with volume constraints")]
struct Cli {
    /// Print only errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write the CSV log and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the init seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the diagnostics on a reduced-size copy of the configured problem.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Run several schemes from the same initial state and compare them.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// At least two of: multiplier, penalty, minimizing_movement (or mm).
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        schemes: Vec<Scheme>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let opts = |seed| Options {
        seed,
        quiet: cli.quiet,
    };
    let code = match cli.command {
        Command::Run { ref config, seed } => cmd_run(config, &opts(seed)),
        Command::Check {
            ref config,
            seed,
            corrupt_gradient,
        } => cmd_check(config, &opts(seed), corrupt_gradient),
        Command::Compare {
            ref config,
            seed,
            ref schemes,
        } => cmd_compare(config, schemes, &opts(seed)),
    };
    ExitCode::from(code as u8)
}
