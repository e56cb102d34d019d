mod common;

use std::fs;
use std::path::Path;

use icu_agents::ingestion::*;
use proptest::prelude::*;

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

/// Stays 1-3 complete, stay 4 has no note. Stay 2's vitals are out of order.
fn fixture(dir: &Path) {
    write(
        dir,
        "patient.csv",
        "patientunitstayid,age,gender,unitdischargestatus,unitdischargeoffset\n\
         1,70,Male,Expired,2880\n2,> 89,Female,Alive,1440\n3,55,Female,Alive,4320\n4,60,Male,Expired,720\n",
    );
    write(
        dir,
        "lab.csv",
        "patientunitstayid,labresultoffset,labname,labresult,labmeasurenamesystem\n\
         1,60,lactate,4.1,mmol/L\n2,30,creatinine,1.2,mg/dL\n3,15,sodium,139,mmol/L\n4,10,lactate,2.0,mmol/L\n\
         3,oops,sodium,140,mmol/L\n",
    );
    write(
        dir,
        "vitalPeriodic.csv",
        "patientunitstayid,observationoffset,heartrate,systemicsystolic,sao2,temperature\n\
         1,5,110,90,93,38.1\n2,300,88,,97,\n2,100,92,120,96,37.0\n2,200,,118,,36.9\n3,10,70,130,99,36.6\n4,5,120,80,88,39\n",
    );
    write(
        dir,
        "note.csv",
        "patientunitstayid,noteoffset,notetype,notetext\n\
         1,100,Physician Progress,On norepinephrine.\n2,50,Nursing Note,Comfortable.\n3,20,Nursing Note,Stable overnight.\n",
    );
    write(
        dir,
        "medication.csv",
        "patientunitstayid,drugstartoffset,drugname,dosage\n1,30,norepinephrine,8 mcg/min\n2,40,heparin,5000 units\n",
    );
    write(dir, "apacheApsVar.csv", "apacheapsvarid,patientunitstayid,heartrate,creatinine\n9,1,120,1.9\n10,2,90,-1\n");
    write(
        dir,
        "apachePatientResult.csv",
        "patientunitstayid,apacheversion,predictedicumortality,predictediculos\n1,IV,0.50,3.0\n1,IVa,0.62,3.5\n2,IVa,0.08,2.1\n",
    );
}

#[test]
fn three_complete_one_noteless() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let cohort = load_cohort(dir.path(), &SchemaConfig::default()).unwrap();
    let ids: Vec<u64> = cohort.records.iter().map(|r| r.stay_id.0).collect();
    assert_eq!(ids, vec![1, 2, 3]);
    assert_eq!(cohort.report.dropped_incomplete, 1);
    assert_eq!(cohort.report.missing_notes, 1);
    assert_eq!(cohort.report.malformed_rows(), 1);

    let r1 = &cohort.records[0];
    assert_eq!(r1.outcome.status, OutcomeStatus::Expired);
    assert_eq!(r1.outcome.actual_los_days, 2.0);
    assert_eq!(r1.apache.apache_predicted_mortality, Some(0.62));
    assert_eq!(r1.apache.aps_variables.len(), 2);
    let r2 = &cohort.records[1];
    assert_eq!(r2.age, 90.0);
    assert_eq!(r2.apache.aps_variables.len(), 1);
}

#[test]
fn out_of_order_vitals_are_sorted_and_filled() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let cohort = load_cohort(dir.path(), &SchemaConfig::default()).unwrap();
    let r2 = &cohort.records[1];
    let offsets: Vec<i64> = r2.vitals.iter().map(|v| v.offset_minutes).collect();
    assert_eq!(offsets, vec![100, 200, 300]);
    // heart rate gap at 200 carried forward from 100
    assert_eq!(r2.vitals[1].heart_rate, Some(92.0));
    assert_eq!(r2.vitals[2].sbp, Some(118.0));
}

#[test]
fn empty_directory_names_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_cohort(dir.path(), &SchemaConfig::default()).unwrap_err();
    assert!(matches!(err, IngestError::MissingFile { .. }), "{err}");
    assert!(err.to_string().contains("patient.csv"));
}

#[test]
fn synthetic_round_trip() {
    let (_dir, cohort) = common::synth_cohort(7, 20, 0.5);
    assert_eq!(cohort.records.len(), 20);
    let expired = cohort.records.iter().filter(|r| r.outcome.status == OutcomeStatus::Expired).count();
    assert_eq!(expired, 10);
}

#[test]
fn synthetic_writes_every_input_file_deterministically() {
    let schema = SchemaConfig::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = generate_synthetic(a.path(), &schema, 7, 20, 0.5).unwrap();
    let fb = generate_synthetic(b.path(), &schema, 7, 20, 0.5).unwrap();
    assert_eq!(fa.len(), schema.file_names().len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn single_expired_stay() {
    let (_dir, cohort) = common::synth_cohort(3, 1, 1.0);
    assert_eq!(cohort.records.len(), 1);
    assert_eq!(cohort.records[0].outcome.status, OutcomeStatus::Expired);
}

#[test]
fn unwritable_target_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert!(generate_synthetic(&blocker.join("sub"), &SchemaConfig::default(), 1, 4, 0.5).is_err());
}

#[test]
fn loaded_events_are_ordered_and_features_bounded() {
    let (_dir, cohort) = common::synth_cohort(21, 40, 0.5);
    for r in &cohort.records {
        assert!(r.vitals.windows(2).all(|w| w[0].offset_minutes <= w[1].offset_minutes));
        assert!(r.labs.windows(2).all(|w| w[0].offset_minutes <= w[1].offset_minutes));
        assert!(r.notes.windows(2).all(|w| w[0].offset_minutes <= w[1].offset_minutes));
        assert!(r.medications.windows(2).all(|w| w[0].offset_minutes <= w[1].offset_minutes));
        let f = extract_features(r);
        assert_eq!(f, extract_features(r));
        assert_eq!(f.recent_vitals.len(), r.vitals.len().min(10));
        assert_eq!(f.selected_notes.len(), r.notes.len().min(3));
        let drugs: std::collections::BTreeSet<_> = r.medications.iter().map(|m| &m.drug_name).collect();
        assert_eq!(f.top_medications.len(), drugs.len().min(20));
        assert!(r.notes.iter().all(|n| n.text.chars().count() <= 4000 + " [truncated]".len()));
    }
}

fn lab_strategy() -> impl Strategy<Value = Vec<LabResult>> {
    proptest::collection::vec(
        (0usize..4, -50i64..500, 0.0f64..100.0).prop_map(|(n, off, v)| LabResult {
            name: ["lactate", "creatinine", "sodium", "bun"][n].to_string(),
            value: v,
            unit: String::new(),
            offset_minutes: off,
        }),
        0..30,
    )
}

proptest! {
    #[test]
    fn distinct_labs_keep_latest_per_name(mut labs in lab_strategy()) {
        labs.sort_by_key(|l| l.offset_minutes);
        let record = PatientRecord {
            stay_id: StayId(1),
            age: 50.0,
            sex: Sex::Unknown,
            vitals: vec![],
            labs: labs.clone(),
            notes: vec![],
            medications: vec![],
            apache: ApacheBundle::default(),
            outcome: OutcomeLabel { status: OutcomeStatus::Survived, actual_los_days: 1.0 },
        };
        let f = extract_features(&record);
        let names: std::collections::BTreeSet<&str> = f.distinct_labs.iter().map(|l| l.name.as_str()).collect();
        prop_assert_eq!(names.len(), f.distinct_labs.len());
        for l in &f.distinct_labs {
            let max = labs.iter().filter(|x| x.name == l.name).map(|x| x.offset_minutes).max().unwrap();
            prop_assert_eq!(l.offset_minutes, max);
        }
        let all: std::collections::BTreeSet<&str> = labs.iter().map(|l| l.name.as_str()).collect();
        prop_assert_eq!(names, all);
    }

    #[test]
    fn balanced_sample_matches_request(e in 0usize..20, s in 0usize..20, seed in any::<u64>()) {
        let (_dir, cohort) = common::synth_cohort(5, 40, 0.5);
        let out = sample_balanced(&cohort.records, e, s, seed).unwrap();
        let ne = out.iter().filter(|r| r.outcome.status == OutcomeStatus::Expired).count();
        prop_assert_eq!((ne, out.len() - ne), (e, s));
    }
}
