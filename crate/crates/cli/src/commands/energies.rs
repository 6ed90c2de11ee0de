use std::path::{Path, PathBuf};

use rayon::prelude::*;
use spillscope::energy::{energy_series, write_series_csv, EnergySeries};
use spillscope::records::read_manifest;

use crate::commands::load_trace;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

/// Per-token energies of one trace, or of every trace in a manifest.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// Single trace file; --output is then a CSV file
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    trace: Option<PathBuf>,
    /// Manifest of examples; --output is then a directory receiving
    /// `<id>.energies.csv` per example
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Softmax temperature; values other than 1 need full logit vectors
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

pub fn series_file(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.energies.csv"))
}

fn compute(label: &str, path: &Path, tau: f64) -> Result<EnergySeries> {
    let trace = load_trace(path)?;
    let series = energy_series(&trace, tau).map_err(|e| CliError::invalid(path, e))?;
    let undefined = series.undefined_positions();
    if !undefined.is_empty() {
        eprintln!(
            "warning: {label}: spilled energy undefined at positions {undefined:?} (trace has no trailing step)"
        );
    }
    Ok(series)
}

pub fn run(args: Args) -> Result<()> {
    if !(args.temperature > 0.0 && args.temperature.is_finite()) {
        return Err(CliError::Validation(format!("--temperature must be positive, got {}", args.temperature)));
    }
    let (inputs, config_path) = match (&args.trace, &args.manifest) {
        (Some(trace), _) => {
            let series = compute(&trace.display().to_string(), trace, args.temperature)?;
            files::write_with(&args.output, |buf| write_series_csv(&series, buf))?;
            (vec![trace.clone()], files::config_path_for_file(&args.output))
        }
        (None, Some(manifest)) => {
            let bytes = files::read(manifest)?;
            let entries = read_manifest(bytes.as_slice()).map_err(|e| CliError::invalid(manifest, e))?;
            let base = manifest.parent().unwrap_or(Path::new(""));
            files::create_dir(&args.output)?;
            entries.par_iter().try_for_each(|e| {
                let series = compute(&e.id, &files::resolve(base, &e.trace), args.temperature)?;
                files::write_with(&series_file(&args.output, &e.id), |buf| write_series_csv(&series, buf))
            })?;
            (vec![manifest.clone()], args.output.join("config.json"))
        }
        (None, None) => unreachable!("clap enforces one source"),
    };
    let mut config = RunConfig::new("energies", inputs, args.output.clone());
    config.temperature = Some(args.temperature);
    files::write_json(&config_path, &config)
}
