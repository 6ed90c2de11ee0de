use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use spillscope::detection::read_scores_csv;
use spillscope::eval::{build_report, read_labels, write_table, DatasetInput, ReportConfig, DEFAULT_RESAMPLES};

use crate::commands::report::write_bundle;
use crate::config::{EvaluationSettings, RunConfig};
use crate::error::{CliError, Result};
use crate::files;

/// Score detection quality against correctness labels.
///
/// Examples are grouped by the `dataset` field of the labels file (falling
/// back to --dataset). Exits 1 after writing the report if any cell has an
/// undefined AuROC.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// Scores CSV written by `score`
    #[arg(long)]
    scores: PathBuf,
    /// Labels (JSON lines: id, label | gold + generation, dataset)
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    output_dir: PathBuf,
    /// Dataset name for examples whose label line has none
    #[arg(long, default_value = "default")]
    dataset: String,
    /// Bootstrap resamples for the AuROC spread
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long)]
    no_bootstrap: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

pub fn run(args: Args) -> Result<()> {
    if args.bins == 0 {
        return Err(CliError::Validation("--bins must be at least 1".into()));
    }
    let bytes = files::read(&args.scores)?;
    let scores = read_scores_csv(bytes.as_slice()).map_err(|e| CliError::invalid(&args.scores, e))?;
    if scores.is_empty() {
        return Err(CliError::invalid(&args.scores, "no scores"));
    }
    let bytes = files::read(&args.labels)?;
    let examples = read_labels(bytes.as_slice()).map_err(|e| CliError::invalid(&args.labels, e))?;

    let mut groups: BTreeMap<String, DatasetInput> = BTreeMap::new();
    let mut dataset_of: HashMap<String, String> = HashMap::new();
    for ex in examples {
        let name = ex.dataset.clone().unwrap_or_else(|| args.dataset.clone());
        if dataset_of.insert(ex.example_id.clone(), name.clone()).is_some() {
            return Err(CliError::invalid(&args.labels, format!("duplicate example id `{}`", ex.example_id)));
        }
        groups
            .entry(name.clone())
            .or_insert_with(|| DatasetInput { name, examples: vec![], scores: vec![] })
            .examples
            .push(ex);
    }
    let metrics: BTreeSet<_> = scores.iter().map(|s| s.metric).collect();
    let poolings: BTreeSet<_> = scores.iter().map(|s| s.pooling).collect();
    let mut seen = BTreeSet::new();
    for s in scores {
        if !seen.insert((s.example_id.clone(), s.metric, s.pooling)) {
            return Err(CliError::invalid(
                &args.scores,
                format!("duplicate score for `{}` ({}, {})", s.example_id, s.metric, s.pooling),
            ));
        }
        let name = dataset_of.get(&s.example_id).cloned().unwrap_or_else(|| args.dataset.clone());
        groups
            .entry(name.clone())
            .or_insert_with(|| DatasetInput { name, examples: vec![], scores: vec![] })
            .scores
            .push(s);
    }

    let resamples = (!args.no_bootstrap).then_some(args.resamples);
    let config = ReportConfig { resamples, seed: args.seed, histogram_bins: args.bins };
    let datasets: Vec<DatasetInput> = groups.into_values().collect();
    let metrics: Vec<_> = metrics.into_iter().collect();
    let poolings: Vec<_> = poolings.into_iter().collect();
    let report = build_report(&datasets, &metrics, &poolings, &config);
    write_bundle(&args.output_dir, &report.cells, &report.aggregates, true)?;

    let mut run = RunConfig::new("evaluate", vec![args.scores.clone(), args.labels.clone()], args.output_dir.clone());
    run.metrics = Some(metrics.iter().map(|m| m.code()).collect());
    run.poolings = Some(poolings.iter().map(|p| p.code()).collect());
    run.seed = Some(args.seed);
    run.evaluation = Some(EvaluationSettings {
        default_dataset: args.dataset.clone(),
        resamples,
        histogram_bins: args.bins,
    });
    files::write_json(&args.output_dir.join("config.json"), &run)?;

    let mut table = Vec::new();
    write_table(&report.cells, &report.aggregates, &mut table).map_err(|e| CliError::Validation(e.to_string()))?;
    print!("{}", String::from_utf8_lossy(&table));

    let undefined: Vec<String> = report
        .undefined_cells()
        .map(|c| {
            let why = c.auroc.as_ref().err().map(|e| e.to_string()).unwrap_or_default();
            format!("{}/{}/{} ({} usable examples: {why})", c.dataset, c.metric, c.pooling, c.n_used)
        })
        .collect();
    if !undefined.is_empty() {
        return Err(CliError::Validation(format!("AuROC undefined for {}", undefined.join(", "))));
    }
    Ok(())
}
