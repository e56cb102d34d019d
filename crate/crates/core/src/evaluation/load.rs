//! Reading persisted run directories back for offline evaluation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{run_metrics_from_records, RunMetrics};
use super::report::{compare_models, ComparisonReport};
use super::EvalError;
use crate::orchestrator::{GraphLabel, RunRecord, SUMMARY_FILE};
use crate::prediction::Scoring;

pub const METRICS_FILE: &str = "metrics.json";

/// Per-run metrics as written next to the records. Holds no timing data,
/// so repeated runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub graph_label: GraphLabel,
    pub seed: u64,
    pub threshold: f64,
    #[serde(default)]
    pub apache_blend: f64,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub label: GraphLabel,
    pub seed: u64,
    /// Sorted by stay id.
    pub records: Vec<RunRecord>,
}

impl LoadedRun {
    pub fn metrics(&self, scoring: Scoring) -> Result<RunMetrics, EvalError> {
        run_metrics_from_records(&self.records, scoring)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

fn is_record_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    path.extension().is_some_and(|e| e == "json") && name != SUMMARY_FILE && name != METRICS_FILE
}

/// Loads `<run-id>/<label>/`: every record file in it.
pub fn load_run_dir(dir: &Path) -> Result<LoadedRun, EvalError> {
    let mut records = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if !is_record_file(&path) {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let record = RunRecord::from_json(&text).map_err(|source| EvalError::Json { path: path.clone(), source })?;
        records.push(record);
    }
    let first = records.first().ok_or_else(|| EvalError::NoRecords(dir.to_path_buf()))?;
    let (label, seed) = (first.graph_label.clone(), first.seed);
    if let Some(odd) = records.iter().find(|r| r.graph_label != label || r.seed != seed) {
        return Err(EvalError::MixedRun { dir: dir.to_path_buf(), stay: odd.stay_id.0 });
    }
    records.sort_by_key(|r| r.stay_id);
    Ok(LoadedRun { dir: dir.to_path_buf(), label, seed, records })
}

fn has_records(dir: &Path) -> bool {
    std::fs::read_dir(dir)
        .map(|it| it.filter_map(Result::ok).any(|e| is_record_file(&e.path())))
        .unwrap_or(false)
}

/// Finds every run of `label` below `root`. `root` may be a label
/// directory, a run directory, or a directory of runs. Ordered by seed.
pub fn discover_runs(root: &Path, label: &GraphLabel) -> Result<Vec<LoadedRun>, EvalError> {
    if has_records(root) {
        return Ok(vec![load_run_dir(root)?]);
    }
    let direct = root.join(label.as_str());
    if has_records(&direct) {
        return Ok(vec![load_run_dir(&direct)?]);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    let mut runs = Vec::new();
    for sub in subdirs {
        let dir = sub.join(label.as_str());
        if has_records(&dir) {
            runs.push(load_run_dir(&dir)?);
        }
    }
    runs.sort_by(|a, b| a.seed.cmp(&b.seed).then_with(|| a.dir.cmp(&b.dir)));
    Ok(runs)
}

/// Pairs run k of each list by seed and compares them.
pub fn compare_runs(mas: &[LoadedRun], sas: &[LoadedRun], scoring: Scoring) -> Result<ComparisonReport, EvalError> {
    if mas.len() != sas.len() {
        return Err(EvalError::Pairing { mas: mas.len(), sas: sas.len() });
    }
    if let Some((index, (a, b))) = mas.iter().zip(sas).enumerate().find(|(_, (a, b))| a.seed != b.seed) {
        return Err(EvalError::SeedMismatch { index, mas: a.seed, sas: b.seed });
    }
    let m = mas.iter().map(|r| r.metrics(scoring)).collect::<Result<Vec<_>, _>>()?;
    let s = sas.iter().map(|r| r.metrics(scoring)).collect::<Result<Vec<_>, _>>()?;
    compare_models(&m, &s)
}

pub fn compare_dirs(mas_root: &Path, sas_root: &Path, scoring: Scoring) -> Result<ComparisonReport, EvalError> {
    let mas = discover_runs(mas_root, &GraphLabel::Mas)?;
    let sas = discover_runs(sas_root, &GraphLabel::Sas)?;
    compare_runs(&mas, &sas, scoring)
}
