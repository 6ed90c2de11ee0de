use std::collections::HashSet;
use std::path::{Path, PathBuf};

use spillscope::eval::{
    aggregate, read_cells_csv, write_aggregates_csv, write_cells_csv, write_histogram_csv, write_roc_csv, write_table,
    AggregateRow, ReportCell,
};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::files;

/// Merge cell files from several evaluations into one table.
#[derive(clap::Args, Debug)]
pub struct Args {
    /// `cells.csv` files written by `evaluate`
    #[arg(long, num_args = 1.., required = true)]
    cells: Vec<PathBuf>,
    #[arg(long)]
    output_dir: PathBuf,
}

/// Writes cells, averages and the text table; ROC and histogram files only
/// when the cells carry them.
pub fn write_bundle(dir: &Path, cells: &[ReportCell], aggregates: &[AggregateRow], with_curves: bool) -> Result<()> {
    files::create_dir(dir)?;
    files::write_with(&dir.join("cells.csv"), |buf| write_cells_csv(cells, buf))?;
    files::write_with(&dir.join("aggregates.csv"), |buf| write_aggregates_csv(aggregates, buf))?;
    files::write_with(&dir.join("table.txt"), |buf| write_table(cells, aggregates, buf))?;
    if with_curves {
        files::write_with(&dir.join("roc.csv"), |buf| write_roc_csv(cells, buf))?;
        files::write_with(&dir.join("histogram.csv"), |buf| write_histogram_csv(cells, buf))?;
    }
    Ok(())
}

pub fn run(args: Args) -> Result<()> {
    let mut cells = Vec::new();
    for path in &args.cells {
        let bytes = files::read(path)?;
        cells.extend(read_cells_csv(bytes.as_slice()).map_err(|e| CliError::invalid(path, e))?);
    }
    let mut seen = HashSet::new();
    for c in &cells {
        if !seen.insert((c.dataset.clone(), c.metric, c.pooling)) {
            return Err(CliError::Validation(format!(
                "cell {}/{}/{} appears in more than one input",
                c.dataset, c.metric, c.pooling
            )));
        }
    }
    cells.sort_by(|a, b| (&a.dataset, a.metric, a.pooling).cmp(&(&b.dataset, b.metric, b.pooling)));
    let aggregates = aggregate(&cells);
    write_bundle(&args.output_dir, &cells, &aggregates, false)?;
    files::write_json(&args.output_dir.join("config.json"), &RunConfig::new("report", args.cells.clone(), args.output_dir.clone()))?;

    let mut table = Vec::new();
    write_table(&cells, &aggregates, &mut table).map_err(|e| CliError::Validation(e.to_string()))?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}
