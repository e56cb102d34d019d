use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::graph::GraphLabel;
use crate::agents::AgentName;
use crate::ingestion::{OutcomeLabel, StayId};
use crate::prediction::PredictionOutcome;
use crate::provider::ErrorClass;
use crate::transparency::TransparencyReport;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// One completed node: what it was asked, what it answered, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub agent: AgentName,
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub response_text: String,
    /// Response rejected by the prediction parser before the re-ask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected_response_text: Option<String>,
    /// Provider calls across retries and re-asks.
    pub attempts: u32,
    pub format_reasks: u32,
    /// Logical clock ticks at start and end; a node's start always follows
    /// the end of each dependency.
    pub start_seq: u64,
    pub end_seq: u64,
    pub start_offset_ms: f64,
    pub end_offset_ms: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Provider,
    Render,
    Parse,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub agent: Option<AgentName>,
    pub kind: FailureKind,
    pub error_class: Option<ErrorClass>,
    pub attempts: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub stay_id: StayId,
    pub graph_label: GraphLabel,
    pub seed: u64,
    pub status: RunStatus,
    pub failure: Option<RunFailure>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub model_ids: BTreeMap<AgentName, String>,
    /// In layered order, ties broken by agent name.
    pub tasks: Vec<TaskEntry>,
    pub prediction: Option<PredictionOutcome>,
    pub transparency: Option<TransparencyReport>,
    pub actual_outcome: OutcomeLabel,
    /// Input-side APACHE estimate, kept for optional blending at scoring time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apache_predicted_mortality: Option<f64>,
}

impl RunRecord {
    pub fn is_success(&self) -> bool {
        self.status == RunStatus::Success
    }

    pub fn task(&self, agent: AgentName) -> Option<&TaskEntry> {
        self.tasks.iter().find(|t| t.agent == agent)
    }

    /// Copy with timestamps, clock readings and the run id cleared, for
    /// comparing two executions of the same work.
    pub fn without_timing(&self) -> RunRecord {
        let mut r = self.clone();
        r.run_id.clear();
        r.started_at = DateTime::<Utc>::UNIX_EPOCH;
        r.finished_at = DateTime::<Utc>::UNIX_EPOCH;
        for t in &mut r.tasks {
            t.start_seq = 0;
            t.end_seq = 0;
            t.start_offset_ms = 0.0;
            t.end_offset_ms = 0.0;
            t.wall_time_ms = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(json: &str) -> serde_json::Result<Self> {
        serde_json::from_str(json)
    }
}
