use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const DEFAULT_MODEL_ID: &str = "gpt-4o";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentName {
    LabAnalysis,
    VitalsAnalysis,
    ContextAnalysis,
    Integration,
    Prediction,
    Transparency,
    Validation,
    SasAllInOne,
}

impl AgentName {
    pub const ALL: [AgentName; 8] = [
        AgentName::LabAnalysis,
        AgentName::VitalsAnalysis,
        AgentName::ContextAnalysis,
        AgentName::Integration,
        AgentName::Prediction,
        AgentName::Transparency,
        AgentName::Validation,
        AgentName::SasAllInOne,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentName::LabAnalysis => "lab_analysis",
            AgentName::VitalsAnalysis => "vitals_analysis",
            AgentName::ContextAnalysis => "context_analysis",
            AgentName::Integration => "integration",
            AgentName::Prediction => "prediction",
            AgentName::Transparency => "transparency",
            AgentName::Validation => "validation",
            AgentName::SasAllInOne => "sas_all_in_one",
        }
    }
}

impl fmt::Display for AgentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AgentName::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| format!("unknown agent {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputContract {
    FreeText,
    PredictionTemplate,
    ValidationTemplate,
}

/// Where a section body comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionSource {
    Demographics,
    Labs,
    ApacheFindings,
    Vitals,
    RespiratoryVitals,
    CardiovascularVitals,
    Notes,
    Medications,
    Exemplars,
    /// Only ever supplied to the validation node.
    ActualOutcome,
    Upstream(AgentName),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSection {
    pub heading: String,
    pub sources: Vec<SectionSource>,
}

impl PromptSection {
    pub fn new(heading: &str, sources: impl IntoIterator<Item = SectionSource>) -> Self {
        Self { heading: heading.to_string(), sources: sources.into_iter().collect() }
    }
}

fn default_max_output_tokens() -> u32 {
    1_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: AgentName,
    pub mission: String,
    #[serde(rename = "sections")]
    pub template: Vec<PromptSection>,
    pub output_contract: OutputContract,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
}

fn default_model() -> String {
    DEFAULT_MODEL_ID.to_string()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("agent {0}: mission is empty")]
    EmptyMission(AgentName),
    #[error("agent {0}: section heading is empty")]
    EmptyHeading(AgentName),
    #[error("agent {agent}: section {heading:?} has no sources")]
    EmptySources { agent: AgentName, heading: String },
    #[error("agent {agent}: output contract must be {expected:?}")]
    Contract { agent: AgentName, expected: OutputContract },
    #[error("agent {0}: max_output_tokens must be at least 1")]
    MaxTokens(AgentName),
}

impl AgentSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.mission.trim().is_empty() {
            return Err(SpecError::EmptyMission(self.name));
        }
        for s in &self.template {
            if s.heading.trim().is_empty() {
                return Err(SpecError::EmptyHeading(self.name));
            }
            if s.sources.is_empty() {
                return Err(SpecError::EmptySources { agent: self.name, heading: s.heading.clone() });
            }
        }
        if matches!(self.name, AgentName::Prediction | AgentName::SasAllInOne)
            && self.output_contract != OutputContract::PredictionTemplate
        {
            return Err(SpecError::Contract { agent: self.name, expected: OutputContract::PredictionTemplate });
        }
        if self.max_output_tokens == 0 {
            return Err(SpecError::MaxTokens(self.name));
        }
        Ok(())
    }

    /// Agents whose outputs this spec's template reads.
    pub fn upstream_sources(&self) -> Vec<AgentName> {
        let mut out: Vec<AgentName> = self
            .template
            .iter()
            .flat_map(|s| s.sources.iter())
            .filter_map(|src| match src {
                SectionSource::Upstream(a) => Some(*a),
                _ => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn uses(&self, source: &SectionSource) -> bool {
        self.template.iter().any(|s| s.sources.contains(source))
    }

    /// The built-in spec for `name`.
    pub fn default_for(name: AgentName) -> Self {
        use SectionSource as S;
        let (mission, template, contract) = match name {
            AgentName::LabAnalysis => (
                "Analyze the laboratory results and highlight key abnormalities with their implications for APACHE scoring and prognosis.",
                vec![
                    PromptSection::new("KEY ABNORMALITIES", [S::Labs]),
                    PromptSection::new("APACHE RELEVANT FINDINGS", [S::ApacheFindings]),
                ],
                OutputContract::FreeText,
            ),
            AgentName::VitalsAnalysis => (
                "Evaluate the vital signs for physiological stability, respiratory function and cardiovascular performance.",
                vec![
                    PromptSection::new("PHYSIOLOGICAL STABILITY", [S::Vitals]),
                    PromptSection::new("RESPIRATORY FUNCTION", [S::RespiratoryVitals]),
                    PromptSection::new("CARDIOVASCULAR PERFORMANCE", [S::CardiovascularVitals]),
                ],
                OutputContract::FreeText,
            ),
            AgentName::ContextAnalysis => (
                "Analyze the clinical notes, medications and treatments to infer diagnoses, risk factors and the trajectory of illness.",
                vec![
                    PromptSection::new("DIAGNOSES", [S::Notes]),
                    PromptSection::new("RISK FACTORS", [S::Demographics]),
                    PromptSection::new("TRAJECTORY", [S::Medications]),
                ],
                OutputContract::FreeText,
            ),
            AgentName::Integration => (
                "Fuse the lab, vitals and context analyses into a unified system-by-system clinical assessment and prioritize ICU risk factors for mortality and length of stay.",
                vec![
                    PromptSection::new(
                        "SYSTEM-BY-SYSTEM ASSESSMENT",
                        [
                            S::Upstream(AgentName::LabAnalysis),
                            S::Upstream(AgentName::VitalsAnalysis),
                            S::Upstream(AgentName::ContextAnalysis),
                        ],
                    ),
                    PromptSection::new("ICU RISK PRIORITIES", [S::Demographics]),
                ],
                OutputContract::FreeText,
            ),
            AgentName::Prediction => (
                "Predict the ICU mortality probability and ICU length of stay from the integrated assessment and the APACHE variables.",
                vec![
                    PromptSection::new("FEW-SHOT EXEMPLARS", [S::Exemplars]),
                    PromptSection::new("INTEGRATED ASSESSMENT", [S::Upstream(AgentName::Integration)]),
                    PromptSection::new("APACHE RELEVANT FINDINGS", [S::ApacheFindings]),
                ],
                OutputContract::PredictionTemplate,
            ),
            AgentName::Transparency => (
                "Explain the prediction so clinicians, patients and administrators can follow it, tracing each factor back to its source data.",
                vec![
                    PromptSection::new("PREDICTION", [S::Upstream(AgentName::Prediction)]),
                    PromptSection::new("INTEGRATED ASSESSMENT", [S::Upstream(AgentName::Integration)]),
                ],
                OutputContract::FreeText,
            ),
            AgentName::Validation => (
                "Compare the predicted and actual ICU outcomes and reflect on the prediction's accuracy, key contributing variables and improvements.",
                vec![
                    PromptSection::new("PREDICTION", [S::Upstream(AgentName::Prediction)]),
                    PromptSection::new("TRANSPARENCY REVIEW", [S::Upstream(AgentName::Transparency)]),
                    PromptSection::new("ACTUAL OUTCOME", [S::ActualOutcome]),
                ],
                OutputContract::ValidationTemplate,
            ),
            AgentName::SasAllInOne => (
                "Analyze all of the patient's ICU data, predict the ICU mortality probability and length of stay, and explain the prediction.",
                vec![
                    PromptSection::new("PATIENT", [S::Demographics]),
                    PromptSection::new("LAB RESULTS", [S::Labs]),
                    PromptSection::new("VITAL SIGNS", [S::Vitals]),
                    PromptSection::new("CLINICAL NOTES", [S::Notes]),
                    PromptSection::new("MEDICATIONS", [S::Medications]),
                    PromptSection::new("APACHE RELEVANT FINDINGS", [S::ApacheFindings]),
                    PromptSection::new("FEW-SHOT EXEMPLARS", [S::Exemplars]),
                ],
                OutputContract::PredictionTemplate,
            ),
        };
        AgentSpec {
            name,
            mission: mission.to_string(),
            template,
            output_contract: contract,
            model_id: default_model(),
            max_output_tokens: default_max_output_tokens(),
            temperature: 0.0,
        }
    }
}
