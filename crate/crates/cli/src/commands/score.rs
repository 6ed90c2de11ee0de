use std::path::PathBuf;

use rayon::prelude::*;
use spillscope::answer::Localization;
use spillscope::detection::{score_example, write_scores_csv, DetectionScore, Metric, PoolingStrategy};
use spillscope::energy::read_series_csv;
use spillscope::records::{read_span_records, SpanRecord};

use crate::commands::energies::series_file;
use crate::commands::{parse_metrics, parse_poolings};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

/// Pool energies over each answer span into detection scores.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// Span file written by `locate`
    #[arg(long)]
    spans: PathBuf,
    /// Directory of `<id>.energies.csv` files written by `energies --manifest`
    #[arg(long)]
    energies_dir: PathBuf,
    /// Scores CSV
    #[arg(long)]
    output: PathBuf,
    /// logit_e, marginal_e, spilled_de, scaled_spilled_des or all
    #[arg(long, value_delimiter = ',', default_value = "spilled_de")]
    metric: Vec<String>,
    /// min, max, mean, last_token, after_last_token or all
    #[arg(long, value_delimiter = ',', default_value = "min")]
    pooling: Vec<String>,
}

fn score_one(
    record: &SpanRecord,
    args: &Args,
    metrics: &[Metric],
    poolings: &[PoolingStrategy],
) -> Result<Vec<DetectionScore>> {
    let grid = metrics.iter().flat_map(|&m| poolings.iter().map(move |&p| (m, p)));
    let span = match &record.outcome {
        Localization::Excluded { reason, .. } => {
            return Ok(grid.map(|(m, p)| DetectionScore::excluded(&record.id, m, p, *reason)).collect())
        }
        Localization::Located(a) => a.span,
    };
    let path = series_file(&args.energies_dir, &record.id);
    let bytes = files::read(&path)?;
    let series = read_series_csv(bytes.as_slice()).map_err(|e| CliError::invalid(&path, e))?;
    Ok(grid.map(|(m, p)| score_example(&record.id, &series, span, m, p)).collect())
}

pub fn run(args: Args) -> Result<()> {
    let metrics = parse_metrics(&args.metric)?;
    let poolings = parse_poolings(&args.pooling)?;
    let bytes = files::read(&args.spans)?;
    let records = read_span_records(bytes.as_slice()).map_err(|e| CliError::invalid(&args.spans, e))?;

    let scores: Vec<DetectionScore> = records
        .par_iter()
        .map(|r| score_one(r, &args, &metrics, &poolings))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    files::write_with(&args.output, |buf| write_scores_csv(&scores, buf))?;

    let excluded = scores.iter().filter(|s| s.value.is_err()).count();
    eprintln!("wrote {} scores ({excluded} excluded)", scores.len());

    let mut config = RunConfig::new("score", vec![args.spans.clone(), args.energies_dir.clone()], args.output.clone());
    config.metrics = Some(metrics.iter().map(|m| m.code()).collect());
    config.poolings = Some(poolings.iter().map(|p| p.code()).collect());
    files::write_json(&files::config_path_for_file(&args.output), &config)
}
