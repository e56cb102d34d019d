//! Loading eICU-shaped CSV exports into per-stay records, feature
//! extraction, balanced sampling and synthetic fixtures.

mod features;
mod load;
mod sample;
mod schema;
mod synth;
mod types;

use std::path::PathBuf;

pub use features::{extract_features, MAX_RECENT_VITALS, MAX_SELECTED_NOTES, MAX_TOP_MEDICATIONS};
pub use load::{carry_forward, load_cohort, Cohort, FileReport, LoadReport, NOTE_CHAR_LIMIT};
pub use sample::sample_balanced;
pub use schema::{
    ApacheApsColumns, ApacheResultColumns, LabColumns, MedicationColumns, NoteColumns,
    PatientColumns, SchemaConfig, VitalColumns,
};
pub use synth::generate_synthetic;
pub use types::*;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("missing input file {file} (looked for {path})")]
    MissingFile { file: String, path: PathBuf },
    #[error("{file}: missing column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no stay survived the completeness filter\n{}", .report.to_text())]
    EmptyCohort { report: Box<LoadReport> },
    #[error("not enough {stratum} records: requested {requested}, available {available} (short by {})", .requested - .available)]
    InsufficientStratum {
        stratum: OutcomeStatus,
        requested: usize,
        available: usize,
    },
    #[error("invalid synthetic cohort request: {0}")]
    InvalidSynthetic(String),
}
