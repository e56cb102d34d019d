use serde::{Deserialize, Serialize};

/// File and column names for each input table. Defaults follow the eICU
/// export layout so real extracts and synthetic fixtures load through the
/// same path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub stay_id_column: String,
    pub patient: PatientColumns,
    pub lab: LabColumns,
    pub vitals: VitalColumns,
    pub note: NoteColumns,
    pub medication: MedicationColumns,
    pub apache_aps: ApacheApsColumns,
    pub apache_result: ApacheResultColumns,
    /// Raw cell values treated as "absent" in numeric columns.
    pub missing_sentinels: Vec<String>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            stay_id_column: "patientunitstayid".into(),
            patient: PatientColumns::default(),
            lab: LabColumns::default(),
            vitals: VitalColumns::default(),
            note: NoteColumns::default(),
            medication: MedicationColumns::default(),
            apache_aps: ApacheApsColumns::default(),
            apache_result: ApacheResultColumns::default(),
            missing_sentinels: vec!["".into(), "-1".into(), "NA".into(), "NULL".into()],
        }
    }
}

impl SchemaConfig {
    /// File names in load order.
    pub fn file_names(&self) -> Vec<&str> {
        vec![
            &self.patient.file,
            &self.lab.file,
            &self.vitals.file,
            &self.note.file,
            &self.medication.file,
            &self.apache_aps.file,
            &self.apache_result.file,
        ]
    }

    pub fn is_missing(&self, raw: &str) -> bool {
        let raw = raw.trim();
        self.missing_sentinels.iter().any(|s| s == raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatientColumns {
    pub file: String,
    pub age: String,
    pub sex: String,
    pub discharge_status: String,
    /// Minutes from unit admission to unit discharge.
    pub discharge_offset: String,
    /// Status values (case-insensitive) meaning the patient died in the unit.
    pub expired_values: Vec<String>,
    pub survived_values: Vec<String>,
}

impl Default for PatientColumns {
    fn default() -> Self {
        Self {
            file: "patient.csv".into(),
            age: "age".into(),
            sex: "gender".into(),
            discharge_status: "unitdischargestatus".into(),
            discharge_offset: "unitdischargeoffset".into(),
            expired_values: vec!["expired".into()],
            survived_values: vec!["alive".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabColumns {
    pub file: String,
    pub offset: String,
    pub name: String,
    pub value: String,
    pub unit: String,
}

impl Default for LabColumns {
    fn default() -> Self {
        Self {
            file: "lab.csv".into(),
            offset: "labresultoffset".into(),
            name: "labname".into(),
            value: "labresult".into(),
            unit: "labmeasurenamesystem".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VitalColumns {
    pub file: String,
    pub offset: String,
    pub heart_rate: String,
    pub sbp: String,
    pub spo2: String,
    pub temperature: String,
}

impl Default for VitalColumns {
    fn default() -> Self {
        Self {
            file: "vitalPeriodic.csv".into(),
            offset: "observationoffset".into(),
            heart_rate: "heartrate".into(),
            sbp: "systemicsystolic".into(),
            spo2: "sao2".into(),
            temperature: "temperature".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoteColumns {
    pub file: String,
    pub offset: String,
    /// Column classified into physician / nurse / other by substring.
    pub author: String,
    pub text: String,
}

impl Default for NoteColumns {
    fn default() -> Self {
        Self {
            file: "note.csv".into(),
            offset: "noteoffset".into(),
            author: "notetype".into(),
            text: "notetext".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MedicationColumns {
    pub file: String,
    pub offset: String,
    pub drug_name: String,
    pub dose: String,
}

impl Default for MedicationColumns {
    fn default() -> Self {
        Self {
            file: "medication.csv".into(),
            offset: "drugstartoffset".into(),
            drug_name: "drugname".into(),
            dose: "dosage".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApacheApsColumns {
    pub file: String,
    /// Columns ignored when collecting APS variables (besides the stay id).
    pub ignore: Vec<String>,
}

impl Default for ApacheApsColumns {
    fn default() -> Self {
        Self {
            file: "apacheApsVar.csv".into(),
            ignore: vec!["apacheapsvarid".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ApacheResultColumns {
    pub file: String,
    pub predicted_mortality: String,
    pub predicted_los: String,
    /// Optional version column; when set, rows with `preferred_version`
    /// win over other rows of the same stay.
    pub version: Option<String>,
    pub preferred_version: Option<String>,
}

impl Default for ApacheResultColumns {
    fn default() -> Self {
        Self {
            file: "apachePatientResult.csv".into(),
            predicted_mortality: "predictedicumortality".into(),
            predicted_los: "predictediculos".into(),
            version: Some("apacheversion".into()),
            preferred_version: Some("IVa".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let cfg: SchemaConfig =
            serde_json::from_str(r#"{"lab": {"file": "labs.csv"}}"#).unwrap();
        assert_eq!(cfg.lab.file, "labs.csv");
        assert_eq!(cfg.lab.name, "labname");
        assert_eq!(cfg.patient.file, "patient.csv");
    }

    #[test]
    fn sentinels() {
        let cfg = SchemaConfig::default();
        assert!(cfg.is_missing(" -1 "));
        assert!(cfg.is_missing(""));
        assert!(!cfg.is_missing("-1.5"));
    }
}
