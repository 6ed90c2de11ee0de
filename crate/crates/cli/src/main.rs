//! `spillscope`: the detection pipeline as subcommands.
//!
//! ```text
//! spillscope energies --manifest m.jsonl --output energies/
//! spillscope locate   --manifest m.jsonl --replay replay.jsonl --output spans.jsonl
//! spillscope score    --spans spans.jsonl --energies-dir energies/ --output scores.csv
//! spillscope evaluate --scores scores.csv --labels labels.jsonl --output-dir report/
//! ```
//!
//! Exit status: 0 on success, 1 for invalid input or arguments, 2 for
//! filesystem errors.

mod commands;
mod config;
mod error;
mod files;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "spillscope", version, about = "Hallucination detection from LLM logit traces")]
struct Cli {
    /// Worker threads for per-example work (default: one per core)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    GenArith(commands::gen_arith::Args),
    Energies(commands::energies::Args),
    Locate(commands::locate::Args),
    Score(commands::score::Args),
    Evaluate(commands::evaluate::Args),
    Report(commands::report::Args),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == Some(0) {
        return Err(CliError::Validation("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::GenArith(a) => commands::gen_arith::run(a),
        Command::Energies(a) => commands::energies::run(a),
        Command::Locate(a) => commands::locate::run(a),
        Command::Score(a) => commands::score::run(a),
        Command::Evaluate(a) => commands::evaluate::run(a),
        Command::Report(a) => commands::report::run(a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
