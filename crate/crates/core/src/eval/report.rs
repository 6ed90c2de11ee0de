//! Per-dataset report cells and the cross-dataset average row.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::labels::{Label, LabeledExample};
use super::metrics::{auroc, bootstrap_std, histogram, roc_points, Histogram, MetricError, RangePolicy};
use crate::detection::{DetectionScore, Metric, PoolingStrategy};
use crate::exclusion::ExclusionReason;

#[derive(Debug, Clone)]
pub struct DatasetInput {
    pub name: String,
    pub examples: Vec<LabeledExample>,
    pub scores: Vec<DetectionScore>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportConfig {
    /// `None` skips the bootstrap.
    pub resamples: Option<usize>,
    pub seed: u64,
    pub histogram_bins: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { resamples: Some(super::metrics::DEFAULT_RESAMPLES), seed: 0, histogram_bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub dataset: String,
    pub metric: Metric,
    pub pooling: PoolingStrategy,
    /// `Err` when AuROC is undefined for this cell.
    pub auroc: Result<f64, MetricError>,
    pub bootstrap_std: Option<f64>,
    pub n_used: usize,
    pub excluded: BTreeMap<ExclusionReason, usize>,
    pub roc: Vec<(f64, f64)>,
    pub histogram: Option<Histogram>,
}

impl ReportCell {
    pub fn n_excluded(&self) -> usize {
        self.excluded.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub metric: Metric,
    pub pooling: PoolingStrategy,
    /// Unweighted mean over datasets with a defined AuROC.
    pub mean: Option<f64>,
    /// Population standard deviation across those datasets.
    pub std: Option<f64>,
    pub n_datasets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cells: Vec<ReportCell>,
    pub aggregates: Vec<AggregateRow>,
}

impl EvalReport {
    pub fn undefined_cells(&self) -> impl Iterator<Item = &ReportCell> {
        self.cells.iter().filter(|c| c.auroc.is_err())
    }
}

fn build_cell(
    dataset: &DatasetInput,
    metric: Metric,
    pooling: PoolingStrategy,
    labels: &HashMap<&str, Label>,
    config: &ReportConfig,
) -> ReportCell {
    let scored: HashMap<&str, &DetectionScore> = dataset
        .scores
        .iter()
        .filter(|s| s.metric == metric && s.pooling == pooling)
        .map(|s| (s.example_id.as_str(), s))
        .collect();
    let ids: BTreeSet<&str> = labels.keys().copied().chain(scored.keys().copied()).collect();

    let mut excluded = BTreeMap::new();
    // id order makes the bootstrap independent of input order
    let mut values = Vec::new();
    let mut positive = Vec::new();
    for id in ids {
        let label = labels.get(id).copied().unwrap_or(Label::Unlabeled);
        let outcome = match (scored.get(id), label.is_positive()) {
            (None, _) => Err(ExclusionReason::MissingScore),
            (Some(s), _) if s.value.is_err() => Err(s.value.unwrap_err()),
            (Some(_), None) => Err(ExclusionReason::Unlabeled),
            (Some(s), Some(pos)) => Ok((s.oriented().expect("defined score"), pos)),
        };
        match outcome {
            Ok((v, pos)) => {
                values.push(v);
                positive.push(pos);
            }
            Err(reason) => *excluded.entry(reason).or_insert(0) += 1,
        }
    }

    let auroc = auroc(&values, &positive);
    let bootstrap_std = match (&auroc, config.resamples) {
        (Ok(_), Some(n)) => bootstrap_std(&values, &positive, n, config.seed).ok(),
        _ => None,
    };
    let roc = roc_points(&values, &positive).unwrap_or_default();
    let class_values = |class: bool| -> Vec<f64> {
        values.iter().zip(&positive).filter(|&(_, &p)| p == class).map(|(&v, _)| v).collect()
    };
    let (pos_vals, neg_vals) = (class_values(true), class_values(false));
    let histogram = histogram(&pos_vals, &neg_vals, config.histogram_bins, RangePolicy::Pooled).ok();

    ReportCell {
        dataset: dataset.name.clone(),
        metric,
        pooling,
        auroc,
        bootstrap_std,
        n_used: values.len(),
        excluded,
        roc,
        histogram,
    }
}

/// Fills one cell per (dataset, metric, pooling) and the average row per
/// (metric, pooling). Undefined cells are kept and skipped by the average.
pub fn build_report(
    datasets: &[DatasetInput],
    metrics: &[Metric],
    poolings: &[PoolingStrategy],
    config: &ReportConfig,
) -> EvalReport {
    let metrics: BTreeSet<Metric> = metrics.iter().copied().collect();
    let poolings: BTreeSet<PoolingStrategy> = poolings.iter().copied().collect();
    let mut ordered: Vec<&DatasetInput> = datasets.iter().collect();
    ordered.sort_by(|a, b| a.name.cmp(&b.name));

    let mut cells = Vec::new();
    for ds in ordered {
        let labels: HashMap<&str, Label> =
            ds.examples.iter().map(|e| (e.example_id.as_str(), e.label)).collect();
        for &m in &metrics {
            for &p in &poolings {
                cells.push(build_cell(ds, m, p, &labels, config));
            }
        }
    }
    let aggregates = aggregate(&cells);
    EvalReport { cells, aggregates }
}

/// Average row from cells, possibly gathered from several runs.
pub fn aggregate(cells: &[ReportCell]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Metric, PoolingStrategy), Vec<f64>> = BTreeMap::new();
    for c in cells {
        let entry = groups.entry((c.metric, c.pooling)).or_default();
        if let Ok(a) = c.auroc {
            entry.push(a);
        }
    }
    groups
        .into_iter()
        .map(|((metric, pooling), vals)| {
            let n = vals.len();
            let mean = (n > 0).then(|| vals.iter().sum::<f64>() / n as f64);
            let std = mean.map(|m| (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt());
            AggregateRow { metric, pooling, mean, std, n_datasets: n }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CellRow {
    dataset: String,
    metric: String,
    pooling: String,
    auroc: Option<f64>,
    bootstrap_std: Option<f64>,
    n_used: usize,
    n_excluded: usize,
    exclusions: String,
    status: String,
}

#[derive(Debug, Error)]
pub enum CellCsvError {
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn exclusions_field(excluded: &BTreeMap<ExclusionReason, usize>) -> String {
    excluded.iter().map(|(r, n)| format!("{r}:{n}")).collect::<Vec<_>>().join(";")
}

/// One row per cell: dataset, metric, pooling, auroc, bootstrap_std,
/// n_used, n_excluded, exclusions (`reason:count;...`), status.
pub fn write_cells_csv<W: Write>(cells: &[ReportCell], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(CellRow {
            dataset: c.dataset.clone(),
            metric: c.metric.code().into(),
            pooling: c.pooling.code().into(),
            auroc: c.auroc.as_ref().ok().copied(),
            bootstrap_std: c.bootstrap_std,
            n_used: c.n_used,
            n_excluded: c.n_excluded(),
            exclusions: exclusions_field(&c.excluded),
            status: if c.auroc.is_ok() { "ok" } else { "undefined-auroc" }.into(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads cells written by [`write_cells_csv`]. ROC points and histograms are
/// not part of the cell file and come back empty.
pub fn read_cells_csv<R: Read>(input: R) -> Result<Vec<ReportCell>, CellCsvError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<CellRow>().enumerate() {
        let row_no = i + 2;
        let bad = |message: String| CellCsvError::Malformed { row: row_no, message };
        let row = row?;
        let mut excluded = BTreeMap::new();
        for part in row.exclusions.split(';').filter(|p| !p.is_empty()) {
            let (reason, n) = part.split_once(':').ok_or_else(|| bad(format!("bad exclusion `{part}`")))?;
            let n: usize = n.parse().map_err(|_| bad(format!("bad count in `{part}`")))?;
            excluded.insert(reason.parse().map_err(bad)?, n);
        }
        if excluded.values().sum::<usize>() != row.n_excluded {
            return Err(bad("n_excluded disagrees with exclusions".into()));
        }
        let auroc = match (row.status.as_str(), row.auroc) {
            ("ok", Some(a)) if (0.0..=1.0).contains(&a) => Ok(a),
            ("undefined-auroc", None) => Err(MetricError::SingleClass),
            _ => return Err(bad("status and auroc disagree".into())),
        };
        out.push(ReportCell {
            dataset: row.dataset,
            metric: row.metric.parse().map_err(bad)?,
            pooling: row.pooling.parse().map_err(bad)?,
            auroc,
            bootstrap_std: row.bootstrap_std,
            n_used: row.n_used,
            excluded,
            roc: Vec::new(),
            histogram: None,
        });
    }
    Ok(out)
}

pub fn write_aggregates_csv<W: Write>(rows: &[AggregateRow], mut out: W) -> std::io::Result<()> {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    writeln!(out, "metric,pooling,mean_auroc,std_auroc,n_datasets")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.metric, r.pooling, opt(r.mean), opt(r.std), r.n_datasets)?;
    }
    Ok(())
}

fn pct(value: Option<f64>, spread: Option<f64>) -> String {
    match (value, spread) {
        (Some(v), Some(s)) => format!("{:.2} ± {:.2}", 100.0 * v, 100.0 * s),
        (Some(v), None) => format!("{:.2}", 100.0 * v),
        (None, _) => "n/a".into(),
    }
}

/// Human-readable table: one row per (metric, pooling), one column per
/// dataset, AuROC in percent with its spread, and an Average column.
pub fn write_table<W: Write>(cells: &[ReportCell], aggregates: &[AggregateRow], mut out: W) -> std::io::Result<()> {
    let datasets: BTreeSet<&str> = cells.iter().map(|c| c.dataset.as_str()).collect();
    let lookup: HashMap<(&str, Metric, PoolingStrategy), &ReportCell> =
        cells.iter().map(|c| ((c.dataset.as_str(), c.metric, c.pooling), c)).collect();

    let mut header = vec!["Metric".to_string(), "Pooling".to_string()];
    header.extend(datasets.iter().map(|d| d.to_string()));
    header.push("Average".into());
    let mut rows = vec![header];
    for agg in aggregates {
        let mut row = vec![agg.metric.label().to_string(), agg.pooling.label().to_string()];
        for d in &datasets {
            row.push(match lookup.get(&(*d, agg.metric, agg.pooling)) {
                Some(c) => pct(c.auroc.as_ref().ok().copied(), c.bootstrap_std),
                None => "-".into(),
            });
        }
        row.push(pct(agg.mean, agg.std));
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|k| rows.iter().map(|r| r[k].chars().count()).max().unwrap_or(0))
        .collect();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        writeln!(out, "{}", line.join(" | ").trim_end())?;
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            writeln!(out, "{}", rule.join("-+-"))?;
        }
    }
    Ok(())
}

/// `dataset,metric,pooling,fpr,tpr` for every ROC point.
pub fn write_roc_csv<W: Write>(cells: &[ReportCell], mut out: W) -> std::io::Result<()> {
    writeln!(out, "dataset,metric,pooling,fpr,tpr")?;
    for c in cells {
        for (fpr, tpr) in &c.roc {
            writeln!(out, "{},{},{},{fpr},{tpr}", csv_field(&c.dataset), c.metric, c.pooling)?;
        }
    }
    Ok(())
}

/// `dataset,metric,pooling,bin,lo,hi,incorrect,correct` per histogram bin.
pub fn write_histogram_csv<W: Write>(cells: &[ReportCell], mut out: W) -> std::io::Result<()> {
    writeln!(out, "dataset,metric,pooling,bin,lo,hi,incorrect,correct")?;
    for c in cells {
        let Some(h) = &c.histogram else { continue };
        for k in 0..h.positive.len() {
            writeln!(
                out,
                "{},{},{},{k},{},{},{},{}",
                csv_field(&c.dataset),
                c.metric,
                c.pooling,
                h.edges[k],
                h.edges[k + 1],
                h.positive[k],
                h.negative[k]
            )?;
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(id: &str, label: Label) -> LabeledExample {
        LabeledExample {
            example_id: id.into(),
            dataset: None,
            gold_answers: vec![],
            generation: None,
            label,
        }
    }

    fn score(id: &str, v: Result<f64, ExclusionReason>) -> DetectionScore {
        DetectionScore { example_id: id.into(), metric: Metric::SpilledDe, pooling: PoolingStrategy::Min, value: v }
    }

    fn dataset(name: &str, rows: &[(&str, Label, Result<f64, ExclusionReason>)]) -> DatasetInput {
        DatasetInput {
            name: name.into(),
            examples: rows.iter().map(|(id, l, _)| example(id, *l)).collect(),
            scores: rows.iter().map(|(id, _, v)| score(id, *v)).collect(),
        }
    }

    fn quick() -> ReportConfig {
        ReportConfig { resamples: None, seed: 1, histogram_bins: 4 }
    }

    #[test]
    fn two_datasets_one_metric() {
        use Label::*;
        let a = dataset("a", &[("1", Incorrect, Ok(0.9)), ("2", Correct, Ok(0.1)), ("3", Correct, Ok(0.2))]);
        let b = dataset("b", &[("1", Incorrect, Ok(0.1)), ("2", Correct, Ok(0.9)), ("3", Incorrect, Ok(0.9))]);
        let r = build_report(&[b, a], &[Metric::SpilledDe], &[PoolingStrategy::Min], &quick());
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.cells[0].dataset, "a");
        assert_eq!(r.cells[0].auroc, Ok(1.0));
        // b: positives {0.1, 0.9} vs negative {0.9}: (0 + 0.5) / 2
        assert_eq!(r.cells[1].auroc, Ok(0.25));
        assert_eq!(r.aggregates.len(), 1);
        assert_eq!(r.aggregates[0].mean, Some(0.625));
        assert_eq!(r.aggregates[0].std, Some(0.375));
    }

    #[test]
    fn single_class_cell_is_undefined_and_skipped() {
        use Label::*;
        let a = dataset("a", &[("1", Incorrect, Ok(0.9)), ("2", Correct, Ok(0.1))]);
        let b = dataset("b", &[("1", Correct, Ok(0.1)), ("2", Correct, Ok(0.9))]);
        let r = build_report(&[a, b], &[Metric::SpilledDe], &[PoolingStrategy::Min], &quick());
        assert_eq!(r.cells[1].auroc, Err(MetricError::SingleClass));
        assert_eq!(r.undefined_cells().count(), 1);
        assert_eq!(r.aggregates[0].mean, Some(1.0));
        assert_eq!(r.aggregates[0].n_datasets, 1);
    }

    #[test]
    fn exclusions_are_counted() {
        use Label::*;
        let mut d = dataset(
            "d",
            &[
                ("1", Incorrect, Ok(0.9)),
                ("2", Correct, Ok(0.1)),
                ("3", Correct, Err(ExclusionReason::NoAnswer)),
                ("4", Unlabeled, Ok(0.3)),
            ],
        );
        d.examples.push(example("5", Correct));
        let r = build_report(&[d], &[Metric::SpilledDe], &[PoolingStrategy::Min], &quick());
        let c = &r.cells[0];
        assert_eq!(c.n_used, 2);
        assert_eq!(c.n_used + c.n_excluded(), 5);
        assert_eq!(c.excluded[&ExclusionReason::NoAnswer], 1);
        assert_eq!(c.excluded[&ExclusionReason::Unlabeled], 1);
        assert_eq!(c.excluded[&ExclusionReason::MissingScore], 1);
    }

    #[test]
    fn cells_csv_round_trip_and_table() {
        use Label::*;
        let a = dataset("a", &[("1", Incorrect, Ok(0.9)), ("2", Correct, Ok(0.1)), ("3", Correct, Err(ExclusionReason::NoAnswer))]);
        let b = dataset("b", &[("1", Correct, Ok(0.1))]);
        let r = build_report(&[a, b], &[Metric::SpilledDe], &[PoolingStrategy::Min], &quick());
        let mut buf = Vec::new();
        write_cells_csv(&r.cells, &mut buf).unwrap();
        let back = read_cells_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].auroc, Ok(1.0));
        assert_eq!(back[0].excluded, r.cells[0].excluded);
        assert!(back[1].auroc.is_err());
        assert_eq!(aggregate(&back), r.aggregates);

        let mut t = Vec::new();
        write_table(&r.cells, &r.aggregates, &mut t).unwrap();
        let t = String::from_utf8(t).unwrap();
        assert!(t.lines().next().unwrap().starts_with("Metric"));
        assert!(t.contains("Spilled dE"));
        assert!(t.contains("100.00"));
        assert!(t.contains("n/a"));
    }
}
