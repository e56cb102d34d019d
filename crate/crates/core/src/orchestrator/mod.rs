//! DAG validation and execution of agent pipelines over patients and
//! cohorts, with per-patient run records.

mod dag;
mod executor;
mod graph;
mod memory;
mod record;

pub use dag::{topological_layers, DagError};
pub use executor::{
    execute, make_run_id, persist_record, run_batch, BatchError, BatchOutcome, BatchSummary, Executor,
    PatientFailure, SUMMARY_FILE,
};
pub use graph::{
    build_mas_graph, build_sas_graph, validate_dag, GraphError, GraphLabel, GraphNode, PipelineGraph,
    ValidatedGraph,
};
pub use memory::{SharedMemory, WriteOnceViolation};
pub use record::{FailureKind, RunFailure, RunRecord, RunStatus, TaskEntry, RECORD_SCHEMA_VERSION};
