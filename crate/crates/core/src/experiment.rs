//! Experiment configuration and the commands behind the binary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::agents::{build_few_shot, AgentName};
use crate::evaluation::{
    compare_dirs, discover_runs, emit_report, run_metrics_from_records, EvalError, MetricsDocument, ReportFormat,
    METRICS_FILE,
};
use crate::ingestion::{generate_synthetic, load_cohort, sample_balanced, IngestError, SchemaConfig};
use crate::orchestrator::{
    build_mas_graph, build_sas_graph, make_run_id, BatchError, Executor, FailureKind, GraphError, GraphLabel,
    PipelineGraph, ValidatedGraph,
};
use crate::prediction::{Scoring, DEFAULT_THRESHOLD};
use crate::provider::{HttpConfig, HttpProvider, MockProvider, Provider, ProviderError, RetryPolicy};
use crate::transparency::{Rubric, RubricError};

pub const MIN_TOKEN_BUDGET: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub backend: Backend,
    #[serde(flatten)]
    pub http: HttpConfig,
    /// Applied to every agent unless `model_ids` names it.
    pub model_id: Option<String>,
    pub model_ids: BTreeMap<AgentName, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub schema: SchemaConfig,
    pub n_expired: usize,
    pub n_survived: usize,
    pub seed: u64,
    pub graph: String,
    /// Optional graph document replacing the built-in graph.
    pub graph_path: Option<PathBuf>,
    pub runs: usize,
    pub provider: ProviderSettings,
    pub retry: RetryPolicy,
    pub max_parallel: usize,
    pub token_budget: usize,
    pub threshold: f64,
    /// Weight of the APACHE predicted mortality mixed into the agent
    /// probability before thresholding; 0 is agent-only.
    pub apache_blend: f64,
    pub rubric_path: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            schema: SchemaConfig::default(),
            n_expired: 76,
            n_survived: 74,
            seed: 0,
            graph: "mas".into(),
            graph_path: None,
            runs: 8,
            provider: ProviderSettings::default(),
            retry: RetryPolicy::default(),
            max_parallel: 8,
            token_budget: crate::agents::DEFAULT_TOKEN_BUDGET,
            threshold: DEFAULT_THRESHOLD,
            apache_blend: 0.0,
            rubric_path: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pairing { .. } | EvalError::SeedMismatch { .. } | EvalError::TooFewRuns(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<BatchError> for CliError {
    fn from(e: BatchError) -> Self {
        match e {
            BatchError::Parallelism => CliError::Usage(e.to_string()),
            BatchError::Io { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Usage(format!("invalid graph: {e}"))
    }
}

impl From<RubricError> for CliError {
    fn from(e: RubricError) -> Self {
        CliError::Usage(format!("invalid rubric: {e}"))
    }
}

impl From<ProviderError> for CliError {
    fn from(e: ProviderError) -> Self {
        CliError::Provider(e.to_string())
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("reading config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.token_budget < MIN_TOKEN_BUDGET {
            return bad(format!("token_budget {} is below the minimum of {MIN_TOKEN_BUDGET}", self.token_budget));
        }
        self.scoring().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.max_parallel == 0 {
            return bad("max_parallel must be at least 1".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.n_expired + self.n_survived == 0 {
            return bad("cohort is empty: n_expired and n_survived are both 0".into());
        }
        self.retry.validate().map_err(|m| CliError::Usage(format!("retry policy: {m}")))?;
        Ok(())
    }

    pub fn scoring(&self) -> Scoring {
        Scoring { threshold: self.threshold, apache_blend: self.apache_blend }
    }

    pub fn graph_label(&self) -> GraphLabel {
        GraphLabel::parse(&self.graph)
    }

    /// The graph to run, with model overrides applied.
    pub fn pipeline_graph(&self) -> Result<ValidatedGraph, CliError> {
        let mut graph = match (&self.graph_path, self.graph_label()) {
            (Some(path), _) => PipelineGraph::from_path(path)?,
            (None, GraphLabel::Mas) => build_mas_graph(),
            (None, GraphLabel::Sas) => build_sas_graph(),
            (None, GraphLabel::Custom(name)) => {
                return Err(CliError::Usage(format!("unknown graph {name:?}; use mas, sas or graph_path")))
            }
        };
        for node in &mut graph.nodes {
            if let Some(m) = self.provider.model_ids.get(&node.id()).or(self.provider.model_id.as_ref()) {
                node.spec.model_id = m.clone();
            }
        }
        Ok(ValidatedGraph::new(graph)?)
    }

    pub fn rubric(&self) -> Result<Rubric, CliError> {
        Ok(match &self.rubric_path {
            Some(p) => Rubric::from_path(p)?,
            None => Rubric::default_rubric(),
        })
    }
}

pub fn cmd_synth(
    seed: u64,
    n: usize,
    expired_fraction: f64,
    out_dir: &Path,
    schema: &SchemaConfig,
) -> Result<Vec<PathBuf>, CliError> {
    Ok(generate_synthetic(out_dir, schema, seed, n, expired_fraction)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub run_id: String,
    pub dir: PathBuf,
    pub seed: u64,
    pub succeeded: usize,
    pub failed: usize,
    pub metrics: Option<MetricsDocument>,
}

enum Backing {
    Mock,
    Shared(Arc<dyn Provider>),
}

fn unique_run_id(root: &Path, seed: u64, label: &GraphLabel) -> String {
    let base = make_run_id(Utc::now(), seed);
    let mut id = base.clone();
    let mut k = 1;
    while root.join(&id).join(label.as_str()).exists() {
        id = format!("{base}-{k}");
        k += 1;
    }
    id
}

/// Runs `config.runs` repetitions with seeds seed, seed + 1, …, persisting
/// records, summaries and metrics under `output_dir/runs/`.
pub async fn cmd_run(config: &ExperimentConfig) -> Result<Vec<RunOutput>, CliError> {
    config.validate()?;
    // provider problems end the command before any data is touched
    let backing = match config.provider.backend {
        Backend::Mock => Backing::Mock,
        Backend::Http => Backing::Shared(Arc::new(HttpProvider::from_env(config.provider.http.clone())?)),
    };
    let graph = config.pipeline_graph()?;
    let rubric = config.rubric()?;

    let cohort = load_cohort(&config.data_dir, &config.schema)?;
    tracing::info!(records = cohort.records.len(), "cohort loaded\n{}", cohort.report.to_text());
    let exemplars = build_few_shot(&cohort.records).map_err(|e| CliError::Data(e.to_string()))?;
    let held_out: BTreeSet<_> = exemplars.iter().map(|e| e.stay_id).collect();
    let pool: Vec<_> = cohort.records.into_iter().filter(|r| !held_out.contains(&r.stay_id)).collect();
    let sample = sample_balanced(&pool, config.n_expired, config.n_survived, config.seed)?;

    let runs_root = config.output_dir.join("runs");
    let mut outputs = Vec::with_capacity(config.runs);
    for k in 0..config.runs as u64 {
        let seed = config.seed + k;
        let provider: Arc<dyn Provider> = match &backing {
            Backing::Mock => Arc::new(MockProvider::new(seed)),
            Backing::Shared(p) => p.clone(),
        };
        let run_id = unique_run_id(&runs_root, seed, graph.label());
        let exec = Executor::new(graph.clone(), provider)
            .with_policy(config.retry.clone())
            .with_exemplars(exemplars.clone())
            .with_token_budget(config.token_budget)
            .with_rubric(rubric.clone())
            .with_run_id(run_id.clone())
            .persist_to(&runs_root);
        let dir = exec.run_dir().expect("persistence configured");
        let out = exec.run_batch(&sample, config.max_parallel, seed).await?;

        let all_provider_failures = out.summary.succeeded == 0
            && out.summary.failures.iter().all(|f| f.failure.kind == FailureKind::Provider);
        if all_provider_failures {
            let first = &out.summary.failures[0].failure;
            return Err(CliError::Provider(format!("every patient failed; first error: {}", first.message)));
        }
        let metrics = match run_metrics_from_records(&out.records, config.scoring()) {
            Ok(metrics) => {
                let doc = MetricsDocument {
                    graph_label: graph.label().clone(),
                    seed,
                    threshold: config.threshold,
                    apache_blend: config.apache_blend,
                    metrics,
                };
                let mut bytes = serde_json::to_vec_pretty(&doc).expect("metrics serialize");
                bytes.push(b'\n');
                let path = dir.join(METRICS_FILE);
                std::fs::write(&path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                Some(doc)
            }
            Err(e) => {
                tracing::warn!(run = %run_id, "no metrics for run: {e}");
                None
            }
        };
        outputs.push(RunOutput {
            run_id,
            dir,
            seed,
            succeeded: out.summary.succeeded,
            failed: out.summary.failed,
            metrics,
        });
    }
    Ok(outputs)
}

pub fn cmd_compare(mas_dir: &Path, sas_dir: &Path, scoring: Scoring, format: ReportFormat) -> Result<String, CliError> {
    scoring.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = compare_dirs(mas_dir, sas_dir, scoring)?;
    Ok(emit_report(&report, format))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescoredRun {
    pub graph_label: GraphLabel,
    pub seed: u64,
    pub dir: PathBuf,
    pub n_scored: usize,
    pub mean_explainability: f64,
    pub mean_interpretability: f64,
    pub mean_traceability: f64,
    pub mean_transparency: f64,
}

/// Re-scores the transparency of persisted records under `rubric` without
/// modifying them.
pub fn cmd_score(root: &Path, labels: &[GraphLabel], rubric: &Rubric) -> Result<Vec<RescoredRun>, CliError> {
    let mut out = Vec::new();
    for label in labels {
        for run in discover_runs(root, label)? {
            let reports: Vec<_> = run
                .records
                .iter()
                .filter_map(|r| {
                    let p = r.prediction.as_ref()?;
                    let explanation = r.task(AgentName::Transparency).map_or("", |t| t.response_text.as_str());
                    Some(rubric.score_transparency(&p.raw_text, explanation))
                })
                .collect();
            let n = reports.len();
            let avg = |f: &dyn Fn(&crate::transparency::TransparencyReport) -> f64| {
                if n == 0 {
                    0.0
                } else {
                    reports.iter().map(f).sum::<f64>() / n as f64
                }
            };
            out.push(RescoredRun {
                graph_label: run.label.clone(),
                seed: run.seed,
                dir: run.dir.clone(),
                n_scored: n,
                mean_explainability: avg(&|r| r.explainability.score),
                mean_interpretability: avg(&|r| r.interpretability.score),
                mean_traceability: avg(&|r| r.traceability.score),
                mean_transparency: avg(&|r| r.overall),
            });
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("no run records found under {}", root.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!((c.n_expired, c.n_survived, c.token_budget, c.runs), (76, 74, 10_000, 8));
        assert_eq!(c.provider.http.api_key_env, "OPENAI_API_KEY");
    }

    #[test]
    fn bounds() {
        let c = ExperimentConfig { token_budget: 999, ..Default::default() };
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
        for t in [0.0, 1.0, -0.1] {
            let c = ExperimentConfig { threshold: t, ..Default::default() };
            assert!(c.validate().is_err());
        }
        let c = ExperimentConfig { apache_blend: 1.2, ..Default::default() };
        assert!(c.validate().unwrap_err().to_string().contains("blend"));
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"seed": 7, "provider": {"backend": "http", "model_id": "m2"}}"#).unwrap();
        assert_eq!((c.seed, c.provider.backend, c.n_expired), (7, Backend::Http, 76));
        let g = c.pipeline_graph().unwrap();
        assert!(g.graph().nodes.iter().all(|n| n.spec.model_id == "m2"));
    }
}
