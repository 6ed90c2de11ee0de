//! Correctness labeling, detection metrics and report assembly.

pub mod labels;
pub mod metrics;
pub mod report;

pub use labels::{label_correctness, read_labels, Label, LabeledExample, LabelsError};
pub use metrics::{
    auroc, bootstrap_std, histogram, roc_points, trapezoid_area, Histogram, MetricError, RangePolicy,
    DEFAULT_RESAMPLES,
};
pub use report::{
    aggregate, build_report, read_cells_csv, write_aggregates_csv, write_cells_csv, write_histogram_csv,
    write_roc_csv, write_table, AggregateRow, CellCsvError, DatasetInput, EvalReport, ReportCell, ReportConfig,
};
