use serde::{Deserialize, Serialize};

use super::stats::{mean, sample_sd};
use super::EvalError;
use crate::ingestion::{OutcomeLabel, OutcomeStatus, StayId};
use crate::orchestrator::{RunRecord, RunStatus};
use crate::prediction::{ClassifyError, PredictionOutcome, Scoring};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientResult {
    pub stay_id: StayId,
    pub predicted: PredictionOutcome,
    pub predicted_status: OutcomeStatus,
    pub actual: OutcomeLabel,
    pub transparency_overall: f64,
}

impl PatientResult {
    pub fn new(
        stay_id: StayId,
        predicted: PredictionOutcome,
        actual: OutcomeLabel,
        transparency_overall: f64,
        threshold: f64,
    ) -> Result<Self, ClassifyError> {
        Self::scored(stay_id, predicted, None, actual, transparency_overall, Scoring::agent_only(threshold))
    }

    pub fn scored(
        stay_id: StayId,
        predicted: PredictionOutcome,
        apache_predicted_mortality: Option<f64>,
        actual: OutcomeLabel,
        transparency_overall: f64,
        scoring: Scoring,
    ) -> Result<Self, ClassifyError> {
        let predicted_status = scoring.classify(predicted.mortality_probability, apache_predicted_mortality)?;
        Ok(Self { stay_id, predicted, predicted_status, actual, transparency_overall })
    }

    pub fn is_correct(&self) -> bool {
        self.predicted_status == self.actual.status
    }

    pub fn los_error(&self) -> f64 {
        self.predicted.predicted_los_days - self.actual.actual_los_days
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub accuracy_percent: f64,
    pub los_mae_days: f64,
    pub los_mse_days2: f64,
    pub los_rmse_days: f64,
    pub mean_transparency: f64,
    pub n_patients: usize,
    /// Patients left out because their run failed or produced no
    /// parseable prediction.
    #[serde(default)]
    pub n_excluded: usize,
}

pub fn compute_run_metrics(results: &[PatientResult]) -> Result<RunMetrics, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NoResults);
    }
    let n = results.len() as f64;
    let correct = results.iter().filter(|r| r.is_correct()).count() as f64;
    let abs: Vec<f64> = results.iter().map(|r| r.los_error().abs()).collect();
    let sq: Vec<f64> = results.iter().map(|r| r.los_error().powi(2)).collect();
    let tr: Vec<f64> = results.iter().map(|r| r.transparency_overall).collect();
    let mse = mean(&sq).expect("non-empty");
    Ok(RunMetrics {
        accuracy_percent: 100.0 * correct / n,
        los_mae_days: mean(&abs).expect("non-empty"),
        los_mse_days2: mse,
        los_rmse_days: mse.sqrt(),
        mean_transparency: mean(&tr).expect("non-empty"),
        n_patients: results.len(),
        n_excluded: 0,
    })
}

/// Successful records with a parsed prediction become results; the rest
/// are counted as exclusions.
pub fn results_from_records(
    records: &[RunRecord],
    scoring: Scoring,
) -> Result<(Vec<PatientResult>, usize), EvalError> {
    let mut results = Vec::with_capacity(records.len());
    let mut excluded = 0;
    for r in records {
        match (&r.status, &r.prediction) {
            (RunStatus::Success, Some(p)) => {
                let overall = r.transparency.as_ref().map_or(0.0, |t| t.overall);
                results.push(PatientResult::scored(
                    r.stay_id,
                    p.clone(),
                    r.apache_predicted_mortality,
                    r.actual_outcome,
                    overall,
                    scoring,
                )?);
            }
            _ => excluded += 1,
        }
    }
    Ok((results, excluded))
}

pub fn run_metrics_from_records(records: &[RunRecord], scoring: Scoring) -> Result<RunMetrics, EvalError> {
    let (results, excluded) = results_from_records(records, scoring)?;
    let mut m = compute_run_metrics(&results)?;
    m.n_excluded = excluded;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    LosMae,
    LosMse,
    LosRmse,
    Transparency,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Accuracy, Metric::LosMae, Metric::LosMse, Metric::LosRmse, Metric::Transparency];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Accuracy => "Mortality Prediction Accuracy (%)",
            Metric::LosMae => "LOS Mean Error (days)",
            Metric::LosMse => "Mean Squared Error (days²)",
            Metric::LosRmse => "Root Mean Squared Error (days)",
            Metric::Transparency => "Average transparency score (%)",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Accuracy | Metric::Transparency)
    }

    /// Display precision used in rendered tables.
    pub fn decimals(self) -> usize {
        match self {
            Metric::Accuracy | Metric::LosMse => 1,
            Metric::LosMae | Metric::LosRmse | Metric::Transparency => 2,
        }
    }

    pub fn value(self, m: &RunMetrics) -> f64 {
        match self {
            Metric::Accuracy => m.accuracy_percent,
            Metric::LosMae => m.los_mae_days,
            Metric::LosMse => m.los_mse_days2,
            Metric::LosRmse => m.los_rmse_days,
            Metric::Transparency => m.mean_transparency,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Absent for a single run.
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub n_runs: usize,
    pub accuracy_percent: MeanSd,
    pub los_mae_days: MeanSd,
    pub los_mse_days2: MeanSd,
    pub los_rmse_days: MeanSd,
    pub mean_transparency: MeanSd,
    pub total_excluded: usize,
}

impl AggregateMetrics {
    pub fn get(&self, metric: Metric) -> MeanSd {
        match metric {
            Metric::Accuracy => self.accuracy_percent,
            Metric::LosMae => self.los_mae_days,
            Metric::LosMse => self.los_mse_days2,
            Metric::LosRmse => self.los_rmse_days,
            Metric::Transparency => self.mean_transparency,
        }
    }
}

pub fn aggregate_runs(per_run: &[RunMetrics]) -> Result<AggregateMetrics, EvalError> {
    if per_run.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let summarize = |metric: Metric| {
        let xs: Vec<f64> = per_run.iter().map(|m| metric.value(m)).collect();
        MeanSd { mean: mean(&xs).expect("non-empty"), sd: sample_sd(&xs) }
    };
    Ok(AggregateMetrics {
        n_runs: per_run.len(),
        accuracy_percent: summarize(Metric::Accuracy),
        los_mae_days: summarize(Metric::LosMae),
        los_mse_days2: summarize(Metric::LosMse),
        los_rmse_days: summarize(Metric::LosRmse),
        mean_transparency: summarize(Metric::Transparency),
        total_excluded: per_run.iter().map(|m| m.n_excluded).sum(),
    })
}

/// "58.6 (1.1)"; the SD part is dropped when absent.
pub fn format_mean_sd(mean: f64, sd: Option<f64>, decimals: usize) -> String {
    match sd {
        Some(sd) => format!("{mean:.decimals$} ({sd:.decimals$})"),
        None => format!("{mean:.decimals$}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prediction::Confidence;

    fn result(p: f64, status: OutcomeStatus, pred_los: f64, actual_los: f64) -> PatientResult {
        PatientResult::new(
            StayId(1),
            PredictionOutcome {
                mortality_probability: p,
                predicted_los_days: pred_los,
                confidence: Confidence::Low,
                key_factors: vec!["age".into()],
                raw_text: String::new(),
            },
            OutcomeLabel { status, actual_los_days: actual_los },
            50.0,
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn los_errors_three_and_five() {
        use OutcomeStatus::*;
        let m = compute_run_metrics(&[result(0.9, Expired, 4.0, 1.0), result(0.1, Survived, 1.0, 6.0)]).unwrap();
        assert_eq!((m.accuracy_percent, m.los_mae_days, m.los_mse_days2), (100.0, 4.0, 17.0));
        assert!((m.los_rmse_days - 4.1231).abs() < 1e-4);
    }

    #[test]
    fn half_right() {
        use OutcomeStatus::*;
        // predicted [E,S,E,S] vs actual [E,E,S,S]
        let rs = [
            result(0.9, Expired, 2.0, 2.0),
            result(0.1, Expired, 2.0, 2.0),
            result(0.9, Survived, 2.0, 2.0),
            result(0.1, Survived, 2.0, 2.0),
        ];
        let m = compute_run_metrics(&rs).unwrap();
        assert_eq!(m.accuracy_percent, 50.0);
        assert_eq!((m.los_mae_days, m.los_mse_days2, m.los_rmse_days), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_results() {
        assert!(matches!(compute_run_metrics(&[]), Err(EvalError::NoResults)));
        assert!(matches!(aggregate_runs(&[]), Err(EvalError::NoRuns)));
    }

    #[test]
    fn aggregate_four_and_six() {
        let run = |acc| RunMetrics {
            accuracy_percent: acc,
            los_mae_days: 1.0,
            los_mse_days2: 1.0,
            los_rmse_days: 1.0,
            mean_transparency: 80.0,
            n_patients: 10,
            n_excluded: 1,
        };
        let a = aggregate_runs(&[run(4.0), run(6.0)]).unwrap();
        assert_eq!(a.accuracy_percent.mean, 5.0);
        assert!((a.accuracy_percent.sd.unwrap() - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(a.los_mae_days.sd, Some(0.0));
        assert_eq!(a.total_excluded, 2);
        assert_eq!(aggregate_runs(&[run(4.0)]).unwrap().accuracy_percent.sd, None);
    }

    #[test]
    fn mean_sd_rendering() {
        assert_eq!(format_mean_sd(58.6, Some(1.1), 1), "58.6 (1.1)");
        assert_eq!(format_mean_sd(4.37, Some(0.21), 2), "4.37 (0.21)");
        assert_eq!(format_mean_sd(85.5, None, 2), "85.50");
    }
}
