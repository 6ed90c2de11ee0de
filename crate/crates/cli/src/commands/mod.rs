pub mod energies;
pub mod evaluate;
pub mod gen_arith;
pub mod locate;
pub mod report;
pub mod score;

use std::collections::BTreeSet;
use std::path::Path;

use spillscope::detection::{Metric, PoolingStrategy};
use spillscope::trace::{read_trace, Trace};

use crate::error::{CliError, Result};
use crate::files;

/// Expands a comma list where `all` stands for every variant; the result is
/// deduplicated and in canonical order.
fn expand<T: Ord + Copy + std::str::FromStr<Err = String>>(values: &[String], all: &[T]) -> Result<Vec<T>> {
    let mut out = BTreeSet::new();
    for v in values {
        if v.eq_ignore_ascii_case("all") {
            out.extend(all.iter().copied());
        } else {
            out.insert(v.parse::<T>().map_err(CliError::Validation)?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Validation("empty selection".into()));
    }
    Ok(out.into_iter().collect())
}

pub fn parse_metrics(values: &[String]) -> Result<Vec<Metric>> {
    expand(values, &Metric::ALL)
}

pub fn parse_poolings(values: &[String]) -> Result<Vec<PoolingStrategy>> {
    expand(values, &PoolingStrategy::ALL)
}

pub fn load_trace(path: &Path) -> Result<Trace> {
    let bytes = files::read(path)?;
    read_trace(bytes.as_slice()).map_err(|e| CliError::invalid(path, e))
}
