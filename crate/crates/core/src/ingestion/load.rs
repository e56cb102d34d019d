use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::SchemaConfig;
use super::types::{
    ApacheBundle, AuthorRole, ClinicalNote, LabResult, MedicationEntry, OutcomeLabel,
    OutcomeStatus, PatientRecord, Sex, StayId, VitalSample,
};
use super::IngestError;
use crate::text::truncate_chars;

/// Per-note character cap applied at load time.
pub const NOTE_CHAR_LIMIT: usize = 4_000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FileReport {
    pub file: String,
    pub rows_read: usize,
    pub rows_skipped: usize,
}

/// Summary of what `load_cohort` kept, dropped and repaired.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub files: Vec<FileReport>,
    pub stays_in_patient_file: usize,
    /// Stays referenced by event files but absent from the patient file.
    pub orphan_event_stays: usize,
    pub dropped_incomplete: usize,
    pub missing_vitals: usize,
    pub missing_labs: usize,
    pub missing_notes: usize,
    /// Vital channel values filled by carrying the last observation forward.
    pub imputed_vital_values: usize,
    pub truncated_notes: usize,
    pub records_loaded: usize,
}

impl LoadReport {
    pub fn malformed_rows(&self) -> usize {
        self.files.iter().map(|f| f.rows_skipped).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.files {
            let _ = writeln!(out, "{}: {} rows read, {} skipped", f.file, f.rows_read, f.rows_skipped);
        }
        let _ = writeln!(out, "stays in patient file: {}", self.stays_in_patient_file);
        let _ = writeln!(out, "orphan event stays: {}", self.orphan_event_stays);
        let _ = writeln!(
            out,
            "dropped incomplete: {} (no vitals {}, no labs {}, no notes {})",
            self.dropped_incomplete, self.missing_vitals, self.missing_labs, self.missing_notes
        );
        let _ = writeln!(out, "imputed vital values (LOCF): {}", self.imputed_vital_values);
        let _ = writeln!(out, "truncated notes: {}", self.truncated_notes);
        let _ = write!(out, "records loaded: {}", self.records_loaded);
        out
    }
}

#[derive(Debug, Clone)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub report: LoadReport,
}

struct Table {
    file: String,
    headers: HashMap<String, usize>,
    reader: csv::Reader<File>,
}

impl Table {
    fn open(dir: &Path, file: &str) -> Result<Self, IngestError> {
        let path = dir.join(file);
        if !path.is_file() {
            return Err(IngestError::MissingFile { file: file.to_string(), path });
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(&path)
            .map_err(|source| IngestError::Csv { file: file.to_string(), source })?;
        let headers = reader
            .headers()
            .map_err(|source| IngestError::Csv { file: file.to_string(), source })?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        Ok(Self { file: file.to_string(), headers, reader })
    }

    fn column(&self, name: &str) -> Result<usize, IngestError> {
        self.headers.get(name).copied().ok_or_else(|| IngestError::MissingColumn {
            file: self.file.clone(),
            column: name.to_string(),
        })
    }

    /// Calls `f` for every row; rows that fail to decode or for which `f`
    /// returns `None` are tallied as skipped.
    fn for_each_row(
        mut self,
        mut f: impl FnMut(&csv::StringRecord) -> Option<()>,
    ) -> FileReport {
        let mut report = FileReport { file: self.file.clone(), ..Default::default() };
        for row in self.reader.records() {
            report.rows_read += 1;
            match row {
                Ok(row) => {
                    if f(&row).is_none() {
                        report.rows_skipped += 1;
                    }
                }
                Err(_) => report.rows_skipped += 1,
            }
        }
        report
    }
}

fn cell(row: &csv::StringRecord, idx: usize) -> Option<&str> {
    row.get(idx).map(str::trim)
}

fn parse_stay(row: &csv::StringRecord, idx: usize) -> Option<StayId> {
    cell(row, idx)?.parse().ok().map(StayId)
}

fn parse_offset(raw: &str) -> Option<i64> {
    raw.parse::<i64>().ok().or_else(|| {
        let v: f64 = raw.parse().ok()?;
        v.is_finite().then_some(v.round() as i64)
    })
}

/// `Ok(None)` for sentinel/absent, `Err(())` for garbage.
fn parse_optional(schema: &SchemaConfig, raw: &str) -> Result<Option<f64>, ()> {
    if schema.is_missing(raw) {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

fn parse_age(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    // eICU encodes ages above 89 as "> 89".
    if let Some(rest) = raw.strip_prefix('>') {
        return rest.trim().parse::<f64>().ok().map(|v| v + 1.0);
    }
    raw.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0)
}

struct PatientRow {
    age: f64,
    sex: Sex,
    outcome: OutcomeLabel,
}

/// Loads and joins the six eICU-shaped tables (APACHE split into its APS and
/// result files) under `dir`, keeping only complete stays.
pub fn load_cohort(dir: &Path, schema: &SchemaConfig) -> Result<Cohort, IngestError> {
    // Open everything up front so a missing file fails before any work.
    let patient_t = Table::open(dir, &schema.patient.file)?;
    let lab_t = Table::open(dir, &schema.lab.file)?;
    let vital_t = Table::open(dir, &schema.vitals.file)?;
    let note_t = Table::open(dir, &schema.note.file)?;
    let med_t = Table::open(dir, &schema.medication.file)?;
    let aps_t = Table::open(dir, &schema.apache_aps.file)?;
    let result_t = Table::open(dir, &schema.apache_result.file)?;

    let mut report = LoadReport::default();

    // patient
    let mut patients: BTreeMap<StayId, PatientRow> = BTreeMap::new();
    {
        let pc = &schema.patient;
        let id = patient_t.column(&schema.stay_id_column)?;
        let age = patient_t.column(&pc.age)?;
        let sex = patient_t.column(&pc.sex)?;
        let status = patient_t.column(&pc.discharge_status)?;
        let los = patient_t.column(&pc.discharge_offset)?;
        let expired: Vec<String> = pc.expired_values.iter().map(|s| s.to_lowercase()).collect();
        let survived: Vec<String> = pc.survived_values.iter().map(|s| s.to_lowercase()).collect();
        report.files.push(patient_t.for_each_row(|row| {
            let stay = parse_stay(row, id)?;
            let age = parse_age(cell(row, age)?)?;
            let sex = Sex::parse(cell(row, sex)?);
            let raw_status = cell(row, status)?.to_lowercase();
            let status = if expired.contains(&raw_status) {
                OutcomeStatus::Expired
            } else if survived.contains(&raw_status) {
                OutcomeStatus::Survived
            } else {
                return None;
            };
            let los_minutes = parse_offset(cell(row, los)?)?;
            if los_minutes < 0 {
                return None;
            }
            let outcome = OutcomeLabel { status, actual_los_days: los_minutes as f64 / 1440.0 };
            patients.entry(stay).or_insert(PatientRow { age, sex, outcome });
            Some(())
        }));
    }

    // lab
    let mut labs: HashMap<StayId, Vec<LabResult>> = HashMap::new();
    {
        let lc = &schema.lab;
        let id = lab_t.column(&schema.stay_id_column)?;
        let offset = lab_t.column(&lc.offset)?;
        let name = lab_t.column(&lc.name)?;
        let value = lab_t.column(&lc.value)?;
        let unit = lab_t.column(&lc.unit)?;
        report.files.push(lab_t.for_each_row(|row| {
            let stay = parse_stay(row, id)?;
            let name = cell(row, name)?;
            if name.is_empty() {
                return None;
            }
            let value = parse_optional(schema, cell(row, value)?).ok()??;
            let offset_minutes = parse_offset(cell(row, offset)?)?;
            labs.entry(stay).or_default().push(LabResult {
                name: name.to_string(),
                value,
                unit: cell(row, unit).unwrap_or("").to_string(),
                offset_minutes,
            });
            Some(())
        }));
    }

    // vitalPeriodic
    let mut vitals: HashMap<StayId, Vec<VitalSample>> = HashMap::new();
    {
        let vc = &schema.vitals;
        let id = vital_t.column(&schema.stay_id_column)?;
        let offset = vital_t.column(&vc.offset)?;
        let hr = vital_t.column(&vc.heart_rate)?;
        let sbp = vital_t.column(&vc.sbp)?;
        let spo2 = vital_t.column(&vc.spo2)?;
        let temp = vital_t.column(&vc.temperature)?;
        report.files.push(vital_t.for_each_row(|row| {
            let stay = parse_stay(row, id)?;
            let offset_minutes = parse_offset(cell(row, offset)?)?;
            if offset_minutes < 0 {
                return None;
            }
            let read = |idx| parse_optional(schema, cell(row, idx).unwrap_or("")).ok();
            let spo2 = read(spo2)?;
            if spo2.is_some_and(|v| !(0.0..=100.0).contains(&v)) {
                return None;
            }
            vitals.entry(stay).or_default().push(VitalSample {
                offset_minutes,
                heart_rate: read(hr)?,
                sbp: read(sbp)?,
                spo2,
                temperature: read(temp)?,
            });
            Some(())
        }));
    }

    // note
    let mut notes: HashMap<StayId, Vec<ClinicalNote>> = HashMap::new();
    {
        let nc = &schema.note;
        let id = note_t.column(&schema.stay_id_column)?;
        let offset = note_t.column(&nc.offset)?;
        let author = note_t.column(&nc.author)?;
        let text = note_t.column(&nc.text)?;
        let truncated = &mut report.truncated_notes;
        report.files.push(note_t.for_each_row(|row| {
            let stay = parse_stay(row, id)?;
            let offset_minutes = parse_offset(cell(row, offset)?)?;
            let body = cell(row, text)?;
            if body.is_empty() {
                return None;
            }
            let body = if body.chars().count() > NOTE_CHAR_LIMIT {
                *truncated += 1;
                truncate_chars(body, NOTE_CHAR_LIMIT)
            } else {
                body.to_string()
            };
            notes.entry(stay).or_default().push(ClinicalNote {
                author_role: AuthorRole::classify(cell(row, author).unwrap_or("")),
                offset_minutes,
                text: body,
            });
            Some(())
        }));
    }

    // medication
    let mut meds: HashMap<StayId, Vec<MedicationEntry>> = HashMap::new();
    {
        let mc = &schema.medication;
        let id = med_t.column(&schema.stay_id_column)?;
        let offset = med_t.column(&mc.offset)?;
        let drug = med_t.column(&mc.drug_name)?;
        let dose = med_t.column(&mc.dose)?;
        report.files.push(med_t.for_each_row(|row| {
            let stay = parse_stay(row, id)?;
            let drug = cell(row, drug)?;
            if drug.is_empty() {
                return None;
            }
            let offset_minutes = parse_offset(cell(row, offset)?)?;
            meds.entry(stay).or_default().push(MedicationEntry {
                drug_name: drug.to_string(),
                offset_minutes,
                dose_text: cell(row, dose).unwrap_or("").to_string(),
            });
            Some(())
        }));
    }

    // apacheApsVar
    let mut apache: HashMap<StayId, ApacheBundle> = HashMap::new();
    {
        let id = aps_t.column(&schema.stay_id_column)?;
        let var_columns: Vec<(String, usize)> = {
            let mut cols: Vec<(String, usize)> = aps_t
                .headers
                .iter()
                .filter(|(name, _)| {
                    **name != schema.stay_id_column && !schema.apache_aps.ignore.contains(name)
                })
                .map(|(n, i)| (n.clone(), *i))
                .collect();
            cols.sort_by_key(|(_, i)| *i);
            cols
        };
        report.files.push(aps_t.for_each_row(|row| {
            let stay = parse_stay(row, id)?;
            let mut vars = BTreeMap::new();
            for (name, idx) in &var_columns {
                if let Some(v) = parse_optional(schema, cell(row, *idx).unwrap_or("")).ok()? {
                    vars.insert(name.clone(), v);
                }
            }
            let bundle = apache.entry(stay).or_default();
            if bundle.aps_variables.is_empty() {
                bundle.aps_variables = vars;
            }
            Some(())
        }));
    }

    // apachePatientResult
    {
        let rc = &schema.apache_result;
        let id = result_t.column(&schema.stay_id_column)?;
        let mort = result_t.column(&rc.predicted_mortality)?;
        let los = result_t.column(&rc.predicted_los)?;
        let version = match &rc.version {
            Some(col) => Some(result_t.column(col)?),
            None => None,
        };
        let mut preferred_seen: BTreeSet<StayId> = BTreeSet::new();
        report.files.push(result_t.for_each_row(|row| {
            let stay = parse_stay(row, id)?;
            let mortality = parse_optional(schema, cell(row, mort)?).ok()?;
            if mortality.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
                return None;
            }
            let pred_los = parse_optional(schema, cell(row, los)?).ok()?;
            if pred_los.is_some_and(|d| d < 0.0) {
                return None;
            }
            let is_preferred = match (version, &rc.preferred_version) {
                (Some(idx), Some(pref)) => cell(row, idx) == Some(pref.as_str()),
                _ => false,
            };
            if preferred_seen.contains(&stay) {
                return Some(());
            }
            let bundle = apache.entry(stay).or_default();
            let unset = bundle.apache_predicted_mortality.is_none()
                && bundle.apache_predicted_los.is_none();
            if is_preferred || unset {
                bundle.apache_predicted_mortality = mortality;
                bundle.apache_predicted_los = pred_los;
            }
            if is_preferred {
                preferred_seen.insert(stay);
            }
            Some(())
        }));
    }

    report.stays_in_patient_file = patients.len();
    let event_stays: BTreeSet<StayId> = labs
        .keys()
        .chain(vitals.keys())
        .chain(notes.keys())
        .chain(meds.keys())
        .copied()
        .collect();
    report.orphan_event_stays = event_stays.iter().filter(|s| !patients.contains_key(s)).count();

    let mut records = Vec::new();
    for (stay_id, p) in patients {
        let mut stay_vitals = vitals.remove(&stay_id).unwrap_or_default();
        let mut stay_labs = labs.remove(&stay_id).unwrap_or_default();
        let mut stay_notes = notes.remove(&stay_id).unwrap_or_default();
        let mut stay_meds = meds.remove(&stay_id).unwrap_or_default();

        let (no_v, no_l, no_n) = (stay_vitals.is_empty(), stay_labs.is_empty(), stay_notes.is_empty());
        report.missing_vitals += no_v as usize;
        report.missing_labs += no_l as usize;
        report.missing_notes += no_n as usize;
        if no_v || no_l || no_n {
            report.dropped_incomplete += 1;
            continue;
        }

        stay_vitals.sort_by_key(|v| v.offset_minutes);
        stay_labs.sort_by_key(|l| l.offset_minutes);
        stay_notes.sort_by_key(|n| n.offset_minutes);
        stay_meds.sort_by_key(|m| m.offset_minutes);
        report.imputed_vital_values += carry_forward(&mut stay_vitals);

        records.push(PatientRecord {
            stay_id,
            age: p.age,
            sex: p.sex,
            vitals: stay_vitals,
            labs: stay_labs,
            notes: stay_notes,
            medications: stay_meds,
            apache: apache.remove(&stay_id).unwrap_or_default(),
            outcome: p.outcome,
        });
    }
    report.records_loaded = records.len();
    tracing::debug!(records = records.len(), dropped = report.dropped_incomplete, "cohort loaded");

    if records.is_empty() {
        return Err(IngestError::EmptyCohort { report: Box::new(report) });
    }
    Ok(Cohort { records, report })
}

/// Last-observation-carried-forward per channel over offset-sorted samples.
/// Leading gaps stay absent. Returns the number of filled values.
pub fn carry_forward(vitals: &mut [VitalSample]) -> usize {
    fn fill(
        vitals: &mut [VitalSample],
        get: impl Fn(&mut VitalSample) -> &mut Option<f64>,
    ) -> usize {
        let mut last = None;
        let mut filled = 0;
        for v in vitals.iter_mut() {
            let slot = get(v);
            match slot {
                Some(x) => last = Some(*x),
                None => {
                    if let Some(x) = last {
                        *slot = Some(x);
                        filled += 1;
                    }
                }
            }
        }
        filled
    }
    fill(vitals, |v| &mut v.heart_rate)
        + fill(vitals, |v| &mut v.sbp)
        + fill(vitals, |v| &mut v.spo2)
        + fill(vitals, |v| &mut v.temperature)
}
