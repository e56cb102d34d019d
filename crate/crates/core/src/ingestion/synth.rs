//! Synthetic eICU-shaped fixtures.
//!
//! Each stay gets a hidden severity in [0, 1] that drives its vitals, labs,
//! note wording, medications and APACHE predictions. The value is written to
//! an extra `synthetic_severity` column of the patient file, which the loader
//! ignores. Outcome status is assigned exactly (`round(n * fraction)` stays
//! expire) and severity is drawn conditionally on it, so features carry a
//! real but noisy mortality signal.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use super::schema::SchemaConfig;
use super::IngestError;

const LABS: &[(&str, &str, f64, f64)] = &[
    // name, unit, base, severity slope
    ("lactate", "mmol/L", 1.0, 4.5),
    ("creatinine", "mg/dL", 0.7, 2.6),
    ("WBC x 1000", "K/mcL", 7.0, 11.0),
    ("sodium", "mmol/L", 139.0, -4.0),
    ("potassium", "mmol/L", 4.0, 0.9),
    ("BUN", "mg/dL", 14.0, 38.0),
    ("platelets x 1000", "K/mcL", 250.0, -150.0),
    ("bicarbonate", "mmol/L", 25.0, -9.0),
];

const ROUTINE_MEDS: &[(&str, &str)] = &[
    ("heparin", "5000 Units SC q8h"),
    ("pantoprazole", "40 mg IV daily"),
    ("acetaminophen", "650 mg PO q6h PRN"),
    ("insulin regular", "sliding scale"),
    ("ondansetron", "4 mg IV q6h PRN"),
    ("docusate", "100 mg PO BID"),
    ("metoprolol", "25 mg PO BID"),
    ("aspirin", "81 mg PO daily"),
    ("atorvastatin", "40 mg PO nightly"),
    ("sodium chloride 0.9%", "1000 mL IV"),
    ("potassium chloride", "20 mEq PO"),
    ("furosemide", "40 mg IV BID"),
];

const CRITICAL_MEDS: &[(&str, &str)] = &[
    ("norepinephrine", "0.1 mcg/kg/min IV"),
    ("vasopressin", "0.04 Units/min IV"),
    ("propofol", "20 mcg/kg/min IV"),
    ("fentanyl", "50 mcg/hr IV"),
    ("piperacillin-tazobactam", "4.5 g IV q6h"),
    ("vancomycin", "1250 mg IV q12h"),
    ("midazolam", "2 mg/hr IV"),
    ("hydrocortisone", "50 mg IV q6h"),
];

const APS_COLUMNS: &[&str] = &[
    "intubated", "vent", "dialysis", "eyes", "motor", "verbal", "meds", "urine", "wbc",
    "temperature", "respiratoryrate", "sodium", "heartrate", "meanbp", "ph", "hematocrit",
    "creatinine", "albumin", "pao2", "pco2", "bun", "glucose", "bilirubin", "fio2",
];

struct Stay {
    id: u64,
    expired: bool,
    severity: f64,
    los_days: f64,
    age: u32,
    female: bool,
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("finite normal parameters").sample(rng)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IngestError + '_ {
    move |e| IngestError::Io { path: path.to_path_buf(), source: e.into() }
}

struct Out {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Out {
    fn create(dir: &Path, file: &str, header: &[&str]) -> Result<Self, IngestError> {
        let path = dir.join(file);
        let f = fs::File::create(&path).map_err(io_err(&path))?;
        let mut writer = csv::Writer::from_writer(f);
        writer.write_record(header).map_err(csv_err(&path))?;
        Ok(Self { path, writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), IngestError> {
        self.writer.write_record(fields).map_err(csv_err(&self.path))
    }

    fn finish(mut self) -> Result<PathBuf, IngestError> {
        self.writer.flush().map_err(io_err(&self.path))?;
        Ok(self.path)
    }
}

fn opt(value: Option<f64>, decimals: usize) -> String {
    value.map(|v| format!("{v:.decimals$}")).unwrap_or_default()
}

/// Writes a synthetic cohort of `n_stays` stays into `out_dir` using the
/// file and column names from `schema`. Returns the written paths.
pub fn generate_synthetic(
    out_dir: &Path,
    schema: &SchemaConfig,
    seed: u64,
    n_stays: usize,
    expired_fraction: f64,
) -> Result<Vec<PathBuf>, IngestError> {
    if n_stays == 0 {
        return Err(IngestError::InvalidSynthetic("n_stays must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&expired_fraction) {
        return Err(IngestError::InvalidSynthetic(format!(
            "expired_fraction {expired_fraction} outside [0, 1]"
        )));
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_expired = (n_stays as f64 * expired_fraction).round() as usize;
    let mut expired_flags: Vec<bool> = (0..n_stays).map(|i| i < n_expired).collect();
    expired_flags.shuffle(&mut rng);

    let survived_los = LogNormal::new(3.0f64.ln(), 0.6).expect("valid lognormal");
    let expired_los = LogNormal::new(4.0f64.ln(), 0.7).expect("valid lognormal");
    let stays: Vec<Stay> = expired_flags
        .into_iter()
        .enumerate()
        .map(|(i, expired)| {
            let centre = if expired { 0.66 } else { 0.34 };
            let severity = normal(&mut rng, centre, 0.14).clamp(0.02, 0.98);
            let los_days = if expired { expired_los.sample(&mut rng) } else { survived_los.sample(&mut rng) };
            Stay {
                id: 100_001 + i as u64,
                expired,
                severity,
                los_days: los_days.clamp(0.2, 60.0),
                age: rng.random_range(35..=89),
                female: rng.random_bool(0.45),
            }
        })
        .collect();

    let sid = schema.stay_id_column.as_str();
    let mut written = Vec::new();

    // patient
    {
        let pc = &schema.patient;
        let expired_value = pc.expired_values.first().map(String::as_str).unwrap_or("Expired");
        let survived_value = pc.survived_values.first().map(String::as_str).unwrap_or("Alive");
        let mut out = Out::create(
            out_dir,
            &pc.file,
            &[sid, &pc.sex, &pc.age, &pc.discharge_status, &pc.discharge_offset, "synthetic_severity"],
        )?;
        for s in &stays {
            out.row(&[
                s.id.to_string(),
                if s.female { "Female" } else { "Male" }.to_string(),
                s.age.to_string(),
                if s.expired { expired_value } else { survived_value }.to_string(),
                ((s.los_days * 1440.0).round() as i64).to_string(),
                format!("{:.4}", s.severity),
            ])?;
        }
        written.push(out.finish()?);
    }

    // lab
    {
        let lc = &schema.lab;
        let mut out = Out::create(out_dir, &lc.file, &[sid, &lc.offset, &lc.name, &lc.value, &lc.unit])?;
        for s in &stays {
            let mut names: Vec<usize> = (0..LABS.len()).collect();
            names.shuffle(&mut rng);
            let keep = rng.random_range(3..=LABS.len());
            // lactate and creatinine are always drawn
            for &li in names.iter().take(keep).chain([0usize, 1].iter()) {
                let (name, unit, base, slope) = LABS[li];
                for _ in 0..rng.random_range(1..=3) {
                    let offset = rng.random_range(-120..2_000i64);
                    let value = (base + slope * s.severity) * normal(&mut rng, 1.0, 0.08);
                    out.row(&[
                        s.id.to_string(),
                        offset.to_string(),
                        name.to_string(),
                        format!("{:.2}", value.max(0.0)),
                        unit.to_string(),
                    ])?;
                }
            }
        }
        written.push(out.finish()?);
    }

    // vitalPeriodic
    {
        let vc = &schema.vitals;
        let mut out = Out::create(
            out_dir,
            &vc.file,
            &[sid, &vc.offset, &vc.heart_rate, &vc.sbp, &vc.spo2, &vc.temperature],
        )?;
        for s in &stays {
            let n = rng.random_range(6..=18);
            let start = rng.random_range(0..30i64);
            let mut rows = Vec::with_capacity(n);
            for j in 0..n {
                let gap = |rng: &mut ChaCha8Rng| rng.random_bool(0.1);
                let hr = normal(&mut rng, 75.0 + 45.0 * s.severity, 6.0);
                let sbp = normal(&mut rng, 132.0 - 45.0 * s.severity, 8.0);
                let spo2 = normal(&mut rng, 98.0 - 9.0 * s.severity, 1.2).min(100.0);
                let temp = normal(&mut rng, 36.9 + 1.0 * s.severity, 0.3);
                rows.push([
                    s.id.to_string(),
                    (start + 5 * j as i64).to_string(),
                    opt((!gap(&mut rng)).then_some(hr), 0),
                    opt((!gap(&mut rng)).then_some(sbp), 0),
                    opt((!gap(&mut rng)).then_some(spo2), 0),
                    opt((!gap(&mut rng)).then_some(temp), 1),
                ]);
            }
            // periodic exports are not guaranteed to be time ordered
            rows.shuffle(&mut rng);
            for r in rows {
                out.row(&r)?;
            }
        }
        written.push(out.finish()?);
    }

    // note
    {
        let nc = &schema.note;
        let mut out = Out::create(out_dir, &nc.file, &[sid, &nc.offset, &nc.author, &nc.text])?;
        for s in &stays {
            for _ in 0..rng.random_range(1..=4) {
                let author = match rng.random_range(0..10) {
                    0..=3 => "Physician Progress Note",
                    4..=7 => "Nursing Assessment",
                    _ => "Case Management",
                };
                let offset = rng.random_range(0..2_500i64);
                out.row(&[s.id.to_string(), offset.to_string(), author.to_string(), note_text(&mut rng, s)])?;
            }
        }
        written.push(out.finish()?);
    }

    // medication
    {
        let mc = &schema.medication;
        let mut out = Out::create(out_dir, &mc.file, &[sid, &mc.offset, &mc.drug_name, &mc.dose])?;
        for s in &stays {
            for _ in 0..rng.random_range(3..=15) {
                let (drug, dose) = if rng.random_bool(s.severity * 0.7) {
                    CRITICAL_MEDS[rng.random_range(0..CRITICAL_MEDS.len())]
                } else {
                    ROUTINE_MEDS[rng.random_range(0..ROUTINE_MEDS.len())]
                };
                let offset = rng.random_range(0..3_000i64);
                out.row(&[s.id.to_string(), offset.to_string(), drug.to_string(), dose.to_string()])?;
            }
        }
        written.push(out.finish()?);
    }

    // apacheApsVar
    {
        let mut header = vec![sid];
        header.extend_from_slice(APS_COLUMNS);
        let mut out = Out::create(out_dir, &schema.apache_aps.file, &header)?;
        for s in &stays {
            let sev = s.severity;
            let mut row = vec![s.id.to_string()];
            for (k, col) in APS_COLUMNS.iter().enumerate() {
                let value = match *col {
                    "intubated" | "vent" => f64::from(rng.random_bool(sev * 0.8) as u8),
                    "dialysis" => f64::from(rng.random_bool(sev * 0.2) as u8),
                    "eyes" => (4.0 - 3.0 * sev).round(),
                    "motor" => (6.0 - 5.0 * sev).round(),
                    "verbal" => (5.0 - 4.0 * sev).round(),
                    "meds" => 0.0,
                    "urine" => 2_400.0 - 1_900.0 * sev,
                    "wbc" => 7.0 + 11.0 * sev,
                    "temperature" => 36.9 + sev,
                    "respiratoryrate" => 14.0 + 16.0 * sev,
                    "sodium" => 139.0 - 4.0 * sev,
                    "heartrate" => 75.0 + 45.0 * sev,
                    "meanbp" => 90.0 - 30.0 * sev,
                    "ph" => 7.42 - 0.15 * sev,
                    "hematocrit" => 38.0 - 10.0 * sev,
                    "creatinine" => 0.7 + 2.6 * sev,
                    "albumin" => 3.8 - 1.4 * sev,
                    "pao2" => 95.0 - 30.0 * sev,
                    "pco2" => 40.0 + 8.0 * sev,
                    "bun" => 14.0 + 38.0 * sev,
                    "glucose" => 110.0 + 70.0 * sev,
                    "bilirubin" => 0.6 + 2.0 * sev,
                    _ => 0.21 + 0.5 * sev,
                };
                // some stays have sparse APACHE data (first six columns always present)
                let absent = k >= 6 && rng.random_bool(0.15);
                row.push(if absent { "-1".to_string() } else { format!("{:.2}", value) });
            }
            out.row(&row)?;
        }
        written.push(out.finish()?);
    }

    // apachePatientResult
    {
        let rc = &schema.apache_result;
        let mut header = vec![sid];
        if let Some(v) = &rc.version {
            header.push(v);
        }
        header.extend([rc.predicted_mortality.as_str(), rc.predicted_los.as_str()]);
        let mut out = Out::create(out_dir, &rc.file, &header)?;
        for s in &stays {
            let mortality = normal(&mut rng, s.severity, 0.05).clamp(0.01, 0.99);
            let los = s.los_days * normal(&mut rng, 0.0, 0.35).exp();
            let versions: &[&str] = if rc.version.is_some() { &["IV", "IVa"] } else { &["IVa"] };
            for (vi, version) in versions.iter().enumerate() {
                // the older model is slightly off
                let drift = if vi + 1 == versions.len() { 0.0 } else { 0.03 };
                let mut row = vec![s.id.to_string()];
                if rc.version.is_some() {
                    row.push(version.to_string());
                }
                row.push(format!("{:.4}", (mortality + drift).min(1.0)));
                row.push(format!("{:.2}", los.max(0.1)));
                out.row(&row)?;
            }
        }
        written.push(out.finish()?);
    }

    Ok(written)
}

fn note_text(rng: &mut ChaCha8Rng, stay: &Stay) -> String {
    const GRAVE: &[&str] = &[
        "remains on vasopressor support",
        "mechanically ventilated, FiO2 increased overnight",
        "rising lactate despite fluid resuscitation",
        "new oliguria, nephrology consulted",
        "family meeting held regarding goals of care",
        "worsening hypotension, MAP below 65",
    ];
    const GUARDED: &[&str] = &[
        "hemodynamics borderline, monitoring closely",
        "intermittent tachycardia",
        "mild confusion overnight",
        "weaning oxygen as tolerated",
    ];
    const STABLE: &[&str] = &[
        "hemodynamically stable on room air",
        "tolerating diet, ambulating with assistance",
        "pain controlled, plan to transfer to floor",
        "labs trending toward normal",
        "afebrile, mentating well",
    ];
    let pool = if stay.severity > 0.6 {
        GRAVE
    } else if stay.severity > 0.4 {
        GUARDED
    } else {
        STABLE
    };
    let n = rng.random_range(1..=3);
    let mut parts: Vec<&str> = (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    parts.dedup();
    format!("{}-year-old admitted to ICU. {}.", stay.age, parts.join("; "))
}
