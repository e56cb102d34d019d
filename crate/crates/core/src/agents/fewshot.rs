use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::render::{format_vital, format_value};
use crate::ingestion::{extract_features, OutcomeStatus, PatientRecord, StayId};

/// One worked case embedded in the prediction prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExemplar {
    pub stay_id: StayId,
    pub status: OutcomeStatus,
    pub demographics: String,
    pub apache_lines: Vec<String>,
    pub lab_lines: Vec<String>,
    pub vital_lines: Vec<String>,
    pub outcome_line: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FewShotError {
    #[error("exemplar pool has no {0} record")]
    MissingStratum(OutcomeStatus),
}

/// APACHE variables present + distinct lab names + note count.
pub fn completeness_score(record: &PatientRecord) -> usize {
    let labs: BTreeSet<&str> = record.labs.iter().map(|l| l.name.as_str()).collect();
    record.apache.present_variable_count() + labs.len() + record.notes.len()
}

impl FewShotExemplar {
    pub fn from_record(record: &PatientRecord) -> Self {
        let f = extract_features(record);
        let none = || vec!["NONE REPORTED".to_string()];
        let or_none = |v: Vec<String>| if v.is_empty() { none() } else { v };
        Self {
            stay_id: record.stay_id,
            status: record.outcome.status,
            demographics: format!("{:.0}-year-old {}", record.age, record.sex.as_str().to_lowercase()),
            apache_lines: or_none(
                f.apache.aps_variables.iter().map(|(k, v)| format!("- {k}: {}", format_value(*v))).collect(),
            ),
            lab_lines: or_none(
                f.distinct_labs
                    .iter()
                    .map(|l| format!("- {}: {} {}", l.name, format_value(l.value), l.unit).trim_end().to_string())
                    .collect(),
            ),
            vital_lines: or_none(f.recent_vitals.iter().map(format_vital).collect()),
            outcome_line: format!(
                "OUTCOME: {}, ICU LOS {:.2} days",
                record.outcome.status,
                record.outcome.actual_los_days
            ),
        }
    }

    pub fn render(&self, index: usize) -> String {
        let status = self.status.as_str().to_uppercase();
        format!(
            "=== EXEMPLAR {index}: {status} ===\nDEMOGRAPHICS: {}\nAPACHE VARIABLES:\n{}\nLABS:\n{}\nVITALS:\n{}\n{}\n=== END EXEMPLAR {index} ===",
            self.demographics,
            self.apache_lines.join("\n"),
            self.lab_lines.join("\n"),
            self.vital_lines.join("\n"),
            self.outcome_line,
        )
    }
}

/// Picks the most complete expired and survived records (ties by lower stay
/// id) and returns them in that order.
pub fn build_few_shot(pool: &[PatientRecord]) -> Result<Vec<FewShotExemplar>, FewShotError> {
    [OutcomeStatus::Expired, OutcomeStatus::Survived]
        .into_iter()
        .map(|status| {
            pool.iter()
                .filter(|r| r.outcome.status == status)
                .max_by(|a, b| {
                    completeness_score(a)
                        .cmp(&completeness_score(b))
                        .then(b.stay_id.cmp(&a.stay_id))
                })
                .map(FewShotExemplar::from_record)
                .ok_or(FewShotError::MissingStratum(status))
        })
        .collect()
}
