use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{aggregate_runs, format_mean_sd, Metric, RunMetrics};
use super::stats::{paired_t_test, StatsError};
use super::EvalError;

pub const CI_LEVEL: f64 = 0.95;

/// One row of the comparison table. Flat so that it maps onto a CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: Metric,
    pub label: String,
    pub higher_is_better: bool,
    pub mas_mean: f64,
    pub mas_sd: Option<f64>,
    pub sas_mean: f64,
    pub sas_sd: Option<f64>,
    /// MAS minus SAS, averaged over paired runs.
    pub mean_difference: f64,
    pub t_statistic: Option<f64>,
    pub df: usize,
    pub p_value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub ci_level: f64,
    /// Every paired difference identical, so no test is possible.
    pub degenerate: bool,
    /// "MAS", "SAS", or empty on a tie.
    pub better: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_runs: usize,
    pub mas_patients: usize,
    pub sas_patients: usize,
    pub mas_excluded: usize,
    pub sas_excluded: usize,
    pub rows: Vec<MetricComparison>,
    pub mas_runs: Vec<RunMetrics>,
    pub sas_runs: Vec<RunMetrics>,
}

impl ComparisonReport {
    pub fn row(&self, metric: Metric) -> Option<&MetricComparison> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

/// Paired comparison; run k of each list must share cohort and seed.
pub fn compare_models(mas_runs: &[RunMetrics], sas_runs: &[RunMetrics]) -> Result<ComparisonReport, EvalError> {
    if mas_runs.len() != sas_runs.len() {
        return Err(EvalError::Pairing { mas: mas_runs.len(), sas: sas_runs.len() });
    }
    if mas_runs.len() < 2 {
        return Err(EvalError::TooFewRuns(mas_runs.len()));
    }
    let mas = aggregate_runs(mas_runs)?;
    let sas = aggregate_runs(sas_runs)?;
    let mut rows = Vec::with_capacity(Metric::ALL.len());
    for metric in Metric::ALL {
        let a: Vec<f64> = mas_runs.iter().map(|m| metric.value(m)).collect();
        let b: Vec<f64> = sas_runs.iter().map(|m| metric.value(m)).collect();
        let (mas_s, sas_s) = (mas.get(metric), sas.get(metric));
        let mut row = MetricComparison {
            metric,
            label: metric.label().to_string(),
            higher_is_better: metric.higher_is_better(),
            mas_mean: mas_s.mean,
            mas_sd: mas_s.sd,
            sas_mean: sas_s.mean,
            sas_sd: sas_s.sd,
            mean_difference: 0.0,
            t_statistic: None,
            df: a.len() - 1,
            p_value: None,
            ci_low: None,
            ci_high: None,
            ci_level: CI_LEVEL,
            degenerate: false,
            better: String::new(),
        };
        match paired_t_test(&a, &b) {
            Ok(t) => {
                row.mean_difference = t.mean_difference;
                row.t_statistic = Some(t.t);
                row.p_value = Some(t.p_value);
                row.ci_low = Some(t.ci.low);
                row.ci_high = Some(t.ci.high);
            }
            Err(StatsError::Degenerate { mean_difference }) => {
                row.mean_difference = mean_difference;
                row.degenerate = true;
            }
            Err(e) => return Err(e.into()),
        }
        row.better = if row.mas_mean == row.sas_mean {
            String::new()
        } else if (row.mas_mean > row.sas_mean) == metric.higher_is_better() {
            "MAS".into()
        } else {
            "SAS".into()
        };
        rows.push(row);
    }
    Ok(ComparisonReport {
        n_runs: mas_runs.len(),
        mas_patients: mas_runs.iter().map(|m| m.n_patients).sum(),
        sas_patients: sas_runs.iter().map(|m| m.n_patients).sum(),
        mas_excluded: mas.total_excluded,
        sas_excluded: sas.total_excluded,
        rows,
        mas_runs: mas_runs.to_vec(),
        sas_runs: sas_runs.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub fn format_p(p: f64) -> String {
    if p < 1e-4 {
        "< 0.0001".into()
    } else {
        format!("{p:.4}")
    }
}

pub fn emit_report(report: &ComparisonReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &report.rows {
                w.serialize(row).expect("row serializes");
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
        }
        ReportFormat::Markdown => markdown(report),
    }
}

/// Parses the CSV produced by [`emit_report`].
pub fn rows_from_csv(text: &str) -> Result<Vec<MetricComparison>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

fn markdown(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Multi-agent vs single-agent comparison\n");
    let _ = writeln!(
        out,
        "Paired runs: {}. Patients scored: MAS {}, SAS {}. Excluded (failed or unparsed): MAS {}, SAS {}.\n",
        report.n_runs, report.mas_patients, report.sas_patients, report.mas_excluded, report.sas_excluded
    );
    let _ = writeln!(
        out,
        "| Metric | Multi-agent Mean (SD) | Single-agent Mean (SD) | Mean difference [95% CI] | t (df) | p-value |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|");
    for r in &report.rows {
        let dec = r.metric.decimals();
        let cell = |mean, sd, best: bool| {
            let s = format_mean_sd(mean, sd, dec);
            if best {
                format!("**{s}**")
            } else {
                s
            }
        };
        let diff = match (r.ci_low, r.ci_high) {
            (Some(lo), Some(hi)) => format!("{:.dec$} [{lo:.dec$}, {hi:.dec$}]", r.mean_difference, dec = dec + 1),
            _ => format!("{:.dec$}", r.mean_difference, dec = dec + 1),
        };
        let t = r.t_statistic.map_or_else(|| "n/a".to_string(), |t| format!("{t:.3} ({})", r.df));
        let p = if r.degenerate {
            "identical paired samples".to_string()
        } else {
            r.p_value.map_or_else(|| "n/a".to_string(), format_p)
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {diff} | {t} | {p} |",
            r.label,
            cell(r.mas_mean, r.mas_sd, r.better == "MAS"),
            cell(r.sas_mean, r.sas_sd, r.better == "SAS"),
        );
    }
    out
}
