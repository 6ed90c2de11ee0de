use std::path::PathBuf;

use spillscope::arith::{gen_dataset, write_dataset, Difficulty, DEFAULT_DIGITS};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

/// Generate a synthetic addition dataset with corrupted answers.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// Corruption offset band: easy, medium or hard
    #[arg(long)]
    difficulty: Difficulty,
    /// Problems per class (the file holds twice as many)
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Digits per operand
    #[arg(long, default_value_t = DEFAULT_DIGITS)]
    digits: u32,
    /// Dataset file (JSON lines)
    #[arg(long)]
    output: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let records = gen_dataset(args.n, args.difficulty, args.seed, args.digits)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    files::write_with(&args.output, |buf| write_dataset(&records, buf))?;

    let mut config = RunConfig::new("gen-arith", vec![], args.output.clone());
    config.difficulty = Some(args.difficulty.code());
    config.n_per_class = Some(args.n);
    config.seed = Some(args.seed);
    config.digits = Some(args.digits);
    files::write_json(&files::config_path_for_file(&args.output), &config)?;
    eprintln!("wrote {} problems to {}", records.len(), args.output.display());
    Ok(())
}
