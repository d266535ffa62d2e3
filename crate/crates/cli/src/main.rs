//! `tbqkd`: runs distance sweeps, temperature fringe scans and BB84 sessions
//! and writes plot-ready CSV/JSON with a run manifest.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 internal error.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Format, TempRange};
use error::CliError;
use output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "tbqkd", version, about = "Time-bin QKD link simulator")]
struct Cli {
    /// Scenario file (TOML); omitted keys take the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed of the random streams.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Gates per sweep distance or fringe point, or per BB84 session.
    #[arg(long, global = true, value_name = "N")]
    gates: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", env = "TBQKD_OUT_DIR", default_value = ".")]
    out: PathBuf,

    /// Format of the data table (BB84 sessions are always JSON).
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Click probability versus fiber length.
    Sweep {
        /// Comma-separated fiber lengths in km.
        #[arg(long, value_name = "LIST", default_value = "0,25,50,75,100,125,150")]
        distances: commands::Distances,
    },
    /// Counts versus Bob's device temperature, with sinusoid fits.
    Fringe {
        /// Temperature scan; defaults to one fringe period either side of
        /// the configured temperature in 41 steps.
        #[arg(long, value_name = "LO:HI:STEPS")]
        temp_range: Option<TempRange>,
    },
    /// BB84 session with sifting and QBER.
    Bb84,
}

/// TOML integers are signed 64-bit, so larger seeds cannot be recorded.
const MAX_SEED: u64 = i64::MAX as u64;

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(gates) = cli.gates {
        config.n_gates = gates;
    }
    if config.master_seed > MAX_SEED {
        return Err(CliError::Usage(format!("seed must be at most {MAX_SEED}")));
    }
    config.validate().map_err(CliError::Invalid)?;

    let mut out = OutputDir::create(&cli.out)?;
    match cli.command {
        Command::Sweep { distances } => commands::sweep(&config, &distances.0, cli.format, &mut out),
        Command::Fringe { temp_range } => {
            let range = temp_range.unwrap_or_else(|| commands::default_temp_range(&config));
            commands::fringe(&config, range, cli.format, &mut out)
        }
        Command::Bb84 => commands::bb84(&config, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
