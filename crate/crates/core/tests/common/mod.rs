#![allow(dead_code)]

use icu_agents::ingestion::{generate_synthetic, load_cohort, Cohort, PatientRecord, SchemaConfig};
use tempfile::TempDir;

pub fn synth_cohort(seed: u64, n: usize, expired_fraction: f64) -> (TempDir, Cohort) {
    let dir = TempDir::new().unwrap();
    let schema = SchemaConfig::default();
    generate_synthetic(dir.path(), &schema, seed, n, expired_fraction).unwrap();
    let cohort = load_cohort(dir.path(), &schema).unwrap();
    (dir, cohort)
}

pub fn synth_records(seed: u64, n: usize) -> Vec<PatientRecord> {
    synth_cohort(seed, n, 0.5).1.records
}
