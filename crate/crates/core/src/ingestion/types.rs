use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// eICU `patientunitstayid`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StayId(pub u64);

impl fmt::Display for StayId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

impl Sex {
    pub fn parse(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Sex::Female,
            "male" | "m" => Sex::Male,
            _ => Sex::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "Female",
            Sex::Male => "Male",
            Sex::Unknown => "Unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalSample {
    pub offset_minutes: i64,
    pub heart_rate: Option<f64>,
    pub sbp: Option<f64>,
    pub spo2: Option<f64>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabResult {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub offset_minutes: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorRole {
    Physician,
    Nurse,
    Other,
}

impl AuthorRole {
    /// Classifies a free-form note type by substring.
    pub fn classify(raw: &str) -> Self {
        let lower = raw.to_ascii_lowercase();
        if lower.contains("physician") || lower.contains("doctor") || lower.contains("attending") {
            AuthorRole::Physician
        } else if lower.contains("nurs") {
            AuthorRole::Nurse
        } else {
            AuthorRole::Other
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AuthorRole::Physician => "physician",
            AuthorRole::Nurse => "nurse",
            AuthorRole::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub author_role: AuthorRole,
    pub offset_minutes: i64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationEntry {
    pub drug_name: String,
    pub offset_minutes: i64,
    pub dose_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApacheBundle {
    pub aps_variables: BTreeMap<String, f64>,
    pub apache_predicted_mortality: Option<f64>,
    pub apache_predicted_los: Option<f64>,
}

impl ApacheBundle {
    pub fn present_variable_count(&self) -> usize {
        self.aps_variables.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Expired,
    Survived,
}

impl OutcomeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeStatus::Expired => "expired",
            OutcomeStatus::Survived => "survived",
        }
    }
}

impl fmt::Display for OutcomeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub status: OutcomeStatus,
    pub actual_los_days: f64,
}

/// One ICU stay with all event lists sorted by offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub stay_id: StayId,
    pub age: f64,
    pub sex: Sex,
    pub vitals: Vec<VitalSample>,
    pub labs: Vec<LabResult>,
    pub notes: Vec<ClinicalNote>,
    pub medications: Vec<MedicationEntry>,
    pub apache: ApacheBundle,
    pub outcome: OutcomeLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub stay_id: StayId,
    pub age: f64,
    pub sex: Sex,
}

impl Demographics {
    pub fn summary(&self) -> String {
        format!("Stay {}: {:.0}-year-old {}", self.stay_id, self.age, self.sex.as_str().to_lowercase())
    }
}

/// Bounded view of a record handed to the agents. Never carries the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub demographics: Demographics,
    pub recent_vitals: Vec<VitalSample>,
    pub distinct_labs: Vec<LabResult>,
    pub selected_notes: Vec<ClinicalNote>,
    pub top_medications: Vec<MedicationEntry>,
    pub apache: ApacheBundle,
}
