use std::collections::{BTreeMap, HashMap};

use super::types::{
    ClinicalNote, Demographics, FeatureBundle, LabResult, MedicationEntry, PatientRecord,
};

pub const MAX_RECENT_VITALS: usize = 10;
pub const MAX_SELECTED_NOTES: usize = 3;
pub const MAX_TOP_MEDICATIONS: usize = 20;

/// Reduces a record to the bounded bundle the agents see.
pub fn extract_features(record: &PatientRecord) -> FeatureBundle {
    FeatureBundle {
        demographics: Demographics { stay_id: record.stay_id, age: record.age, sex: record.sex },
        recent_vitals: recent_vitals(record),
        distinct_labs: latest_labs(&record.labs),
        selected_notes: select_notes(&record.notes),
        top_medications: top_medications(&record.medications),
        apache: record.apache.clone(),
    }
}

fn recent_vitals(record: &PatientRecord) -> Vec<super::types::VitalSample> {
    let mut sorted = record.vitals.clone();
    sorted.sort_by_key(|v| v.offset_minutes);
    let skip = sorted.len().saturating_sub(MAX_RECENT_VITALS);
    sorted.split_off(skip)
}

/// Latest sample per lab name, ordered by name.
fn latest_labs(labs: &[LabResult]) -> Vec<LabResult> {
    let mut latest: BTreeMap<&str, &LabResult> = BTreeMap::new();
    for lab in labs {
        latest
            .entry(lab.name.as_str())
            .and_modify(|cur| {
                // later rows win ties so CSV order decides among equal offsets
                if lab.offset_minutes >= cur.offset_minutes {
                    *cur = lab;
                }
            })
            .or_insert(lab);
    }
    latest.into_values().cloned().collect()
}

/// Physician first, then nurse, then other; within a role most recent first,
/// then lexicographic text.
fn select_notes(notes: &[ClinicalNote]) -> Vec<ClinicalNote> {
    let mut ranked: Vec<&ClinicalNote> = notes.iter().collect();
    ranked.sort_by(|a, b| {
        a.author_role
            .cmp(&b.author_role)
            .then(b.offset_minutes.cmp(&a.offset_minutes))
            .then(a.text.cmp(&b.text))
    });
    ranked.into_iter().take(MAX_SELECTED_NOTES).cloned().collect()
}

/// Distinct drugs by descending occurrence count, ties lexicographic. Each
/// drug is represented by its most recent entry.
fn top_medications(meds: &[MedicationEntry]) -> Vec<MedicationEntry> {
    let mut counts: HashMap<&str, (usize, &MedicationEntry)> = HashMap::new();
    for m in meds {
        let slot = counts.entry(m.drug_name.as_str()).or_insert((0, m));
        slot.0 += 1;
        if m.offset_minutes >= slot.1.offset_minutes {
            slot.1 = m;
        }
    }
    let mut ranked: Vec<(&str, usize, &MedicationEntry)> =
        counts.into_iter().map(|(name, (n, e))| (name, n, e)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(MAX_TOP_MEDICATIONS).map(|(_, _, e)| e.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::types::*;

    fn record() -> PatientRecord {
        PatientRecord {
            stay_id: StayId(1),
            age: 70.0,
            sex: Sex::Male,
            vitals: vec![VitalSample {
                offset_minutes: 0,
                heart_rate: Some(80.0),
                sbp: None,
                spo2: None,
                temperature: None,
            }],
            labs: vec![],
            notes: vec![],
            medications: vec![],
            apache: ApacheBundle::default(),
            outcome: OutcomeLabel { status: OutcomeStatus::Survived, actual_los_days: 2.0 },
        }
    }

    fn lab(name: &str, offset: i64) -> LabResult {
        LabResult { name: name.into(), value: offset as f64, unit: "u".into(), offset_minutes: offset }
    }

    fn note(role: AuthorRole, offset: i64, text: &str) -> ClinicalNote {
        ClinicalNote { author_role: role, offset_minutes: offset, text: text.into() }
    }

    fn med(name: &str, offset: i64) -> MedicationEntry {
        MedicationEntry { drug_name: name.into(), offset_minutes: offset, dose_text: String::new() }
    }

    #[test]
    fn twelve_vitals_keep_ranks_three_to_twelve() {
        let mut r = record();
        r.vitals = (0..12)
            .map(|i| VitalSample {
                offset_minutes: i * 5,
                heart_rate: Some(60.0 + i as f64),
                sbp: None,
                spo2: None,
                temperature: None,
            })
            .collect();
        let f = extract_features(&r);
        let offsets: Vec<i64> = f.recent_vitals.iter().map(|v| v.offset_minutes).collect();
        assert_eq!(offsets, (2..12).map(|i| i * 5).collect::<Vec<_>>());
    }

    #[test]
    fn latest_lab_per_name() {
        let mut r = record();
        r.labs = vec![lab("lactate", 60), lab("creatinine", 90), lab("lactate", 120)];
        let f = extract_features(&r);
        assert_eq!(f.distinct_labs, vec![lab("creatinine", 90), lab("lactate", 120)]);
    }

    #[test]
    fn two_nurse_notes_both_selected() {
        let mut r = record();
        r.notes = vec![note(AuthorRole::Nurse, 10, "a"), note(AuthorRole::Nurse, 20, "b")];
        let f = extract_features(&r);
        assert_eq!(f.selected_notes.len(), 2);
        assert_eq!(f.selected_notes[0].text, "b");
    }

    #[test]
    fn notes_prefer_physician_then_recency_then_text() {
        let mut r = record();
        r.notes = vec![
            note(AuthorRole::Other, 500, "other"),
            note(AuthorRole::Nurse, 100, "nurse old"),
            note(AuthorRole::Nurse, 300, "nurse new"),
            note(AuthorRole::Physician, 50, "zeta"),
            note(AuthorRole::Physician, 50, "alpha"),
        ];
        let f = extract_features(&r);
        let texts: Vec<&str> = f.selected_notes.iter().map(|n| n.text.as_str()).collect();
        assert_eq!(texts, vec!["alpha", "zeta", "nurse new"]);
    }

    #[test]
    fn medications_rank_by_frequency_then_name() {
        let mut r = record();
        r.medications = vec![
            med("propofol", 1),
            med("heparin", 2),
            med("heparin", 3),
            med("aspirin", 4),
            med("propofol", 5),
            med("zosyn", 6),
        ];
        let f = extract_features(&r);
        let names: Vec<&str> = f.top_medications.iter().map(|m| m.drug_name.as_str()).collect();
        assert_eq!(names, vec!["heparin", "propofol", "aspirin", "zosyn"]);
        assert_eq!(f.top_medications[1].offset_minutes, 5);
    }

    #[test]
    fn medications_capped_at_twenty() {
        let mut r = record();
        r.medications = (0..30).map(|i| med(&format!("drug{i:02}"), i)).collect();
        let f = extract_features(&r);
        assert_eq!(f.top_medications.len(), 20);
        assert_eq!(f.top_medications[0].drug_name, "drug00");
    }
}
