use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use botl_cli::{run_command, sweep_command};

#[derive(Debug, Parser)]
#[command(name = "botl", version, about = "Run transfer-learning experiments over drifting streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, summary.json and transfers.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment per parameter value and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of tau_perf, tau_mi, tau_cs, scaling_k.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 0.8,0.6,0.4.
        #[arg(long)]
        values: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config, seed, out } => run_command(config, *seed, out.as_deref()),
        Command::Sweep { config, param, values, seed, out } => {
            sweep_command(config, param, values, *seed, out.as_deref())
        }
    };
    match outcome {
        Ok(path) => {
            println!("wrote {}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
