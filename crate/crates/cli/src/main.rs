//! `amech` command-line driver.
//!
//! Exit status: 0 on success, 1 on numerical failure, 2 on configuration
//! errors.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::load_config;
use crate::run::{run, Command, RunError};

#[derive(Debug, Parser)]
#[command(name = "amech", version, about = "Lagrangian mechanics on skew-symmetric algebroids")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("amech: config error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = cli.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    match run(cli.command, &cfg, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ RunError::Numerical(_)) => {
            eprintln!("amech: numerical failure: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("amech: {e}");
            ExitCode::from(1)
        }
    }
}
