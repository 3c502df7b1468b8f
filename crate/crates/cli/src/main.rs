use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sap_cli::{run, Command, Invocation};

/// Suture adiabatic pulse simulations. Frequencies are in rad/µs, times in µs.
#[derive(Debug, Parser)]
#[command(name = "sap", version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-key override applied after parsing, e.g. `pulse.omega_max=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let inv = Invocation {
        command: args.command,
        config_path: args.config,
        overrides: args.overrides,
        workers: args.workers,
        seed: args.seed,
        out: args.out,
    };
    match run(&inv) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("sap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
