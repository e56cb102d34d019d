//! Per-run metrics, aggregation over repeated runs, paired tests and the
//! MAS-vs-SAS comparison report.

mod load;
mod metrics;
mod report;
pub mod stats;

use std::path::PathBuf;

pub use load::{compare_dirs, compare_runs, discover_runs, load_run_dir, LoadedRun, MetricsDocument, METRICS_FILE};
pub use metrics::{
    aggregate_runs, compute_run_metrics, format_mean_sd, results_from_records, run_metrics_from_records,
    AggregateMetrics, MeanSd, Metric, PatientResult, RunMetrics,
};
pub use report::{
    compare_models, emit_report, format_p, rows_from_csv, ComparisonReport, MetricComparison, ReportFormat, CI_LEVEL,
};
pub use stats::{paired_t_test, ConfidenceInterval, PairedTTest, StatsError};

use crate::prediction::ClassifyError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no patient results to score")]
    NoResults,
    #[error("no runs to aggregate")]
    NoRuns,
    #[error("need at least 2 paired runs, got {0}")]
    TooFewRuns(usize),
    #[error("cannot pair runs: MAS has {mas}, SAS has {sas}")]
    Pairing { mas: usize, sas: usize },
    #[error("cannot pair runs: run {index} has seed {mas} for MAS but {sas} for SAS")]
    SeedMismatch { index: usize, mas: u64, sas: u64 },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("no run records in {0}")]
    NoRecords(PathBuf),
    #[error("{dir} mixes runs (stay {stay} has a different graph or seed)")]
    MixedRun { dir: PathBuf, stay: u64 },
}
