use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Utc};
use futures::future::join_all;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::graph::{GraphLabel, ValidatedGraph};
use super::memory::SharedMemory;
use super::record::{FailureKind, RunFailure, RunRecord, RunStatus, TaskEntry, RECORD_SCHEMA_VERSION};
use crate::agents::{
    format_reminder, render_prompt, AgentName, FewShotExemplar, OutputContract, PromptContext, SectionSource,
    DEFAULT_TOKEN_BUDGET,
};
use crate::ingestion::{extract_features, FeatureBundle, PatientRecord, StayId};
use crate::prediction::parse_prediction;
use crate::provider::{with_retries, Provider, ProviderRequest, RetryPolicy};
use crate::transparency::Rubric;

pub const SUMMARY_FILE: &str = "summary.json";

/// `<UTC timestamp>-s<seed>`.
pub fn make_run_id(at: DateTime<Utc>, seed: u64) -> String {
    format!("{}-s{seed}", at.format("%Y%m%dT%H%M%S%3fZ"))
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("max_parallel must be at least 1")]
    Parallelism,
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientFailure {
    pub stay_id: StayId,
    pub failure: RunFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub run_id: String,
    pub graph_label: GraphLabel,
    pub seed: u64,
    pub max_parallel: usize,
    pub attempted: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub failures: Vec<PatientFailure>,
    /// Highest number of patients observed in flight at once.
    pub peak_in_flight: usize,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub total_wall_time_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Sorted by stay id.
    pub records: Vec<RunRecord>,
    pub summary: BatchSummary,
}

/// Runs a validated graph for one patient at a time or a whole cohort.
#[derive(Clone)]
pub struct Executor {
    graph: Arc<ValidatedGraph>,
    provider: Arc<dyn Provider>,
    policy: RetryPolicy,
    exemplars: Arc<Vec<FewShotExemplar>>,
    token_budget: usize,
    rubric: Arc<Rubric>,
    run_id: String,
    output_root: Option<PathBuf>,
}

struct NodeRun<'a> {
    patient: &'a PatientRecord,
    features: &'a FeatureBundle,
    memory: &'a SharedMemory,
    seed: u64,
    clock: &'a AtomicU64,
    t0: Instant,
}

impl Executor {
    pub fn new(graph: ValidatedGraph, provider: Arc<dyn Provider>) -> Self {
        Self {
            graph: Arc::new(graph),
            provider,
            policy: RetryPolicy::default(),
            exemplars: Arc::new(Vec::new()),
            token_budget: DEFAULT_TOKEN_BUDGET,
            rubric: Arc::new(Rubric::default_rubric()),
            run_id: make_run_id(Utc::now(), 0),
            output_root: None,
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_exemplars(mut self, exemplars: Vec<FewShotExemplar>) -> Self {
        self.exemplars = Arc::new(exemplars);
        self
    }

    pub fn with_token_budget(mut self, tokens: usize) -> Self {
        self.token_budget = tokens;
        self
    }

    pub fn with_rubric(mut self, rubric: Rubric) -> Self {
        self.rubric = Arc::new(rubric);
        self
    }

    pub fn with_run_id(mut self, run_id: impl Into<String>) -> Self {
        self.run_id = run_id.into();
        self
    }

    /// Persist records under `root/<run-id>/<graph-label>/`.
    pub fn persist_to(mut self, root: impl Into<PathBuf>) -> Self {
        self.output_root = Some(root.into());
        self
    }

    pub fn graph(&self) -> &ValidatedGraph {
        &self.graph
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn run_dir(&self) -> Option<PathBuf> {
        self.output_root.as_ref().map(|r| r.join(&self.run_id).join(self.graph.label().as_str()))
    }

    /// Runs every node layer by layer. Never panics on provider or parse
    /// failures; those end the run early and are reported in the record.
    pub async fn execute(&self, patient: &PatientRecord, seed: u64) -> RunRecord {
        let started_at = Utc::now();
        let features = extract_features(patient);
        let memory = SharedMemory::new();
        let clock = AtomicU64::new(0);
        let ctx = NodeRun { patient, features: &features, memory: &memory, seed, clock: &clock, t0: Instant::now() };

        let mut failure: Option<RunFailure> = None;
        for layer in self.graph.layers() {
            let results = join_all(layer.iter().map(|id| self.run_node(*id, &ctx))).await;
            for result in results {
                match result {
                    Ok(entry) => {
                        if let Err(v) = memory.publish(entry) {
                            failure.get_or_insert(RunFailure {
                                agent: Some(v.0),
                                kind: FailureKind::Internal,
                                error_class: None,
                                attempts: 0,
                                message: v.to_string(),
                            });
                        }
                    }
                    Err(f) => {
                        failure.get_or_insert(f);
                    }
                }
            }
            if failure.is_some() {
                break;
            }
        }

        let mut entries = memory.into_entries();
        let tasks: Vec<TaskEntry> =
            self.graph.layers().iter().flatten().filter_map(|id| entries.remove(id)).collect();
        let text_of = |agent: AgentName| tasks.iter().find(|t| t.agent == agent).map(|t| t.response_text.as_str());

        let (mut prediction, mut transparency) = (None, None);
        if failure.is_none() {
            if let Some(pred_text) = self.graph.prediction_node().and_then(text_of) {
                prediction = parse_prediction(pred_text).ok();
                let explanation = text_of(AgentName::Transparency).unwrap_or("");
                transparency = Some(self.rubric.score_transparency(pred_text, explanation));
            }
        }

        if let Some(f) = &failure {
            tracing::warn!(stay = %patient.stay_id, agent = ?f.agent, "run failed: {}", f.message);
        }
        RunRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            run_id: self.run_id.clone(),
            stay_id: patient.stay_id,
            graph_label: self.graph.label().clone(),
            seed,
            status: if failure.is_none() { RunStatus::Success } else { RunStatus::Failed },
            failure,
            started_at,
            finished_at: Utc::now(),
            model_ids: self.graph.graph().nodes.iter().map(|n| (n.id(), n.spec.model_id.clone())).collect(),
            tasks,
            prediction,
            transparency,
            actual_outcome: patient.outcome,
            apache_predicted_mortality: patient.apache.apache_predicted_mortality,
        }
    }

    async fn run_node(&self, id: AgentName, run: &NodeRun<'_>) -> Result<TaskEntry, RunFailure> {
        let node = self.graph.node(id).expect("layered node exists");
        let spec = &node.spec;
        let fail = |kind, error_class, attempts, message: String| RunFailure {
            agent: Some(id),
            kind,
            error_class,
            attempts,
            message,
        };

        let upstream = run.memory.texts(&spec.upstream_sources());
        let ctx = PromptContext {
            features: run.features,
            upstream: &upstream,
            exemplars: spec.uses(&SectionSource::Exemplars).then_some(self.exemplars.as_slice()),
            actual_outcome: (id == AgentName::Validation).then_some(&run.patient.outcome),
        };
        let prompt = render_prompt(spec, &ctx, self.token_budget)
            .map_err(|e| fail(FailureKind::Render, None, 0, e.to_string()))?;

        let start_seq = run.clock.fetch_add(1, Ordering::SeqCst);
        let start = run.t0.elapsed();
        let mut request = ProviderRequest {
            model_id: spec.model_id.clone(),
            system_text: prompt.system_text.clone(),
            user_text: prompt.user_text.clone(),
            max_output_tokens: spec.max_output_tokens,
            temperature: spec.temperature,
            seed: run.seed,
        };
        let call = |request: ProviderRequest| async move {
            with_retries(self.provider.as_ref(), &request, &self.policy).await
        };
        let first = call(request.clone())
            .await
            .map_err(|e| fail(FailureKind::Provider, Some(e.error.class), e.attempts, e.error.message.clone()))?;
        let mut attempts = first.attempts_used;
        let mut response_text = first.text;
        let mut rejected = None;
        let mut format_reasks = 0;

        if spec.output_contract == OutputContract::PredictionTemplate {
            if let Err(err) = parse_prediction(&response_text) {
                tracing::debug!(agent = %id, "prediction unparseable, re-asking: {err}");
                format_reasks = 1;
                request.user_text.push_str(&format_reminder(&err.to_string()));
                let second = call(request).await.map_err(|e| {
                    fail(FailureKind::Provider, Some(e.error.class), attempts + e.attempts, e.error.message.clone())
                })?;
                attempts += second.attempts_used;
                rejected = Some(std::mem::replace(&mut response_text, second.text));
                parse_prediction(&response_text).map_err(|e| {
                    fail(FailureKind::Parse, None, attempts, format!("prediction unparseable after re-ask: {e}"))
                })?;
            }
        }

        let end = run.t0.elapsed();
        let end_seq = run.clock.fetch_add(1, Ordering::SeqCst);
        Ok(TaskEntry {
            agent: id,
            model_id: spec.model_id.clone(),
            system_text: prompt.system_text,
            user_text: prompt.user_text,
            response_text,
            rejected_response_text: rejected,
            attempts,
            format_reasks,
            start_seq,
            end_seq,
            start_offset_ms: start.as_secs_f64() * 1e3,
            end_offset_ms: end.as_secs_f64() * 1e3,
            wall_time_ms: (end - start).as_secs_f64() * 1e3,
        })
    }

    /// Runs and, when a run directory is configured, writes the record.
    pub async fn execute_and_persist(&self, patient: &PatientRecord, seed: u64) -> Result<RunRecord, BatchError> {
        let record = self.execute(patient, seed).await;
        if let Some(dir) = self.run_dir() {
            persist_record(&dir, &record)?;
        }
        Ok(record)
    }

    /// Every patient is attempted with at most `max_parallel` in flight;
    /// individual failures are counted, not propagated.
    pub async fn run_batch(
        &self,
        cohort: &[PatientRecord],
        max_parallel: usize,
        seed: u64,
    ) -> Result<BatchOutcome, BatchError> {
        if max_parallel == 0 {
            return Err(BatchError::Parallelism);
        }
        let started_at = Utc::now();
        let t0 = Instant::now();
        let in_flight = AtomicUsize::new(0);
        let peak = AtomicUsize::new(0);
        let results: Vec<Result<RunRecord, BatchError>> = stream::iter(cohort)
            .map(|patient| {
                let (in_flight, peak) = (&in_flight, &peak);
                async move {
                    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    let r = self.execute_and_persist(patient, seed).await;
                    in_flight.fetch_sub(1, Ordering::SeqCst);
                    r
                }
            })
            .buffer_unordered(max_parallel)
            .collect()
            .await;
        let mut records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        records.sort_by_key(|r| r.stay_id);

        let failures: Vec<PatientFailure> = records
            .iter()
            .filter_map(|r| r.failure.clone().map(|failure| PatientFailure { stay_id: r.stay_id, failure }))
            .collect();
        let summary = BatchSummary {
            run_id: self.run_id.clone(),
            graph_label: self.graph.label().clone(),
            seed,
            max_parallel,
            attempted: records.len(),
            succeeded: records.len() - failures.len(),
            failed: failures.len(),
            failures,
            peak_in_flight: peak.load(Ordering::SeqCst),
            started_at,
            finished_at: Utc::now(),
            total_wall_time_ms: t0.elapsed().as_secs_f64() * 1e3,
        };
        tracing::info!(
            run = %summary.run_id,
            graph = %summary.graph_label,
            succeeded = summary.succeeded,
            failed = summary.failed,
            "batch finished"
        );
        if let Some(dir) = self.run_dir() {
            write_json(&dir.join(SUMMARY_FILE), &summary)?;
        }
        Ok(BatchOutcome { records, summary })
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BatchError> {
    let io = |source| BatchError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(io)
}

/// Writes `dir/<stay-id>.json` and returns its path.
pub fn persist_record(dir: &Path, record: &RunRecord) -> Result<PathBuf, BatchError> {
    let path = dir.join(format!("{}.json", record.stay_id));
    write_json(&path, record)?;
    Ok(path)
}

/// Single-patient run with default budget, rubric and no exemplars.
pub async fn execute(
    graph: &ValidatedGraph,
    patient: &PatientRecord,
    backend: Arc<dyn Provider>,
    policy: &RetryPolicy,
    seed: u64,
) -> RunRecord {
    Executor::new(graph.clone(), backend).with_policy(policy.clone()).execute(patient, seed).await
}

/// Cohort run with default budget, rubric and no exemplars; nothing is
/// persisted.
pub async fn run_batch(
    cohort: &[PatientRecord],
    graph: &ValidatedGraph,
    backend: Arc<dyn Provider>,
    policy: &RetryPolicy,
    max_parallel: usize,
    seed: u64,
) -> Result<BatchOutcome, BatchError> {
    Executor::new(graph.clone(), backend)
        .with_policy(policy.clone())
        .run_batch(cohort, max_parallel, seed)
        .await
}
