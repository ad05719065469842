// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Format, RunConfig};

/// Simulation, invasion rates and permanence certificates for structured
/// population models.
#[derive(Parser)]
#[command(name = "permanence", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "PERMANENCE_THREADS")]
    threads: Option<usize>,

    /// Output files to write; overrides `output.format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Iterate the model and write the trajectory.
    Simulate,
    /// Estimate invasion rates on a boundary face.
    Invade,
    /// Search for a permanence certificate (exit 0 certified, 3 infeasible, 4 incomplete).
    Certify,
    /// Sweep δ-perturbations and re-run a permanence analysis.
    Sweep,
}

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let Some(path) = &cli.config else {
        eprintln!("error: --config is required");
        return ExitCode::from(EXIT_CONFIG);
    };
    let cfg = match RunConfig::load(path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("config error: --threads must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let format = cli.format.unwrap_or(cfg.output.format);
    let run = match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Invade => commands::invade(&cfg),
        Command::Certify => commands::certify(&cfg),
        Command::Sweep => commands::sweep(&cfg),
    };
    let report = match run {
        Ok(report) => report,
        Err(commands::Failure::Config(e)) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    print!("{}", report.table);
    if let Err(e) = report.write(&out, format, &cfg) {
        eprintln!("error: could not write reports to {}: {e}", out.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    ExitCode::from(report.exit_code)
}
