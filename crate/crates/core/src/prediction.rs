//! The strict four-line prediction template and its parser.
//!
//! The wire contract between the prediction agent and the evaluator is:
//!
//! ```text
//! MORTALITY_PROBABILITY: <0.00-1.00>
//! PREDICTED_LOS_DAYS: <positive number>
//! CONFIDENCE: <LOW|MEDIUM|HIGH>
//! KEY_FACTORS: <factor; factor; ...>
//! ```
//!
//! Labeled lines may appear anywhere in a response and in any order; the
//! first occurrence of each label wins and surrounding prose is ignored.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingestion::OutcomeStatus;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const MAX_LOS_DAYS: f64 = 365.0;

const CONTRACT: &str = "MORTALITY_PROBABILITY: <0.00-1.00>
PREDICTED_LOS_DAYS: <positive number>
CONFIDENCE: <LOW|MEDIUM|HIGH>
KEY_FACTORS: <factor; factor; ...>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "MORTALITY_PROBABILITY")]
    MortalityProbability,
    #[serde(rename = "PREDICTED_LOS_DAYS")]
    PredictedLosDays,
    #[serde(rename = "CONFIDENCE")]
    Confidence,
    #[serde(rename = "KEY_FACTORS")]
    KeyFactors,
}

impl Field {
    pub const ALL: [Field; 4] =
        [Field::MortalityProbability, Field::PredictedLosDays, Field::Confidence, Field::KeyFactors];

    pub fn label(self) -> &'static str {
        match self {
            Field::MortalityProbability => "MORTALITY_PROBABILITY",
            Field::PredictedLosDays => "PREDICTED_LOS_DAYS",
            Field::Confidence => "CONFIDENCE",
            Field::KeyFactors => "KEY_FACTORS",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Confidence {
    Low,
    Medium,
    High,
}

impl Confidence {
    pub fn as_str(self) -> &'static str {
        match self {
            Confidence::Low => "LOW",
            Confidence::Medium => "MEDIUM",
            Confidence::High => "HIGH",
        }
    }
}

impl FromStr for Confidence {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_uppercase().as_str() {
            "LOW" => Ok(Confidence::Low),
            "MEDIUM" => Ok(Confidence::Medium),
            "HIGH" => Ok(Confidence::High),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutcome {
    pub mortality_probability: f64,
    pub predicted_los_days: f64,
    pub confidence: Confidence,
    pub key_factors: Vec<String>,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("missing field {0}")]
    MissingField(Field),
    #[error("{field} value {value} out of range")]
    Range { field: Field, value: f64 },
    #[error("{field} value {raw:?} could not be parsed")]
    Format { field: Field, raw: String },
}

impl ParseError {
    pub fn field(&self) -> Field {
        match self {
            ParseError::MissingField(f) => *f,
            ParseError::Range { field, .. } | ParseError::Format { field, .. } => *field,
        }
    }
}

/// Instruction block appended to the system text of every agent whose
/// output contract is the prediction template. Byte-stable.
pub fn render_prediction_contract() -> &'static str {
    CONTRACT
}

/// Fills the template with concrete values.
pub fn render_outcome(outcome: &PredictionOutcome) -> String {
    format!(
        "MORTALITY_PROBABILITY: {}\nPREDICTED_LOS_DAYS: {}\nCONFIDENCE: {}\nKEY_FACTORS: {}",
        outcome.mortality_probability,
        outcome.predicted_los_days,
        outcome.confidence.as_str(),
        outcome.key_factors.join("; ")
    )
}

fn find_field(text: &str, field: Field) -> Option<&str> {
    let label = field.label();
    text.lines().find_map(|line| {
        // tolerate markdown emphasis and list bullets around the label
        let line = line.trim_start().trim_start_matches(['*', '-', '#', '>', ' ']);
        let rest = line.strip_prefix(label)?;
        let rest = rest.trim_start_matches('*').trim_start();
        let rest = rest.strip_prefix(':')?;
        Some(rest.trim().trim_matches('*').trim())
    })
}

fn parse_number(field: Field, raw: &str) -> Result<f64, ParseError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError::Format { field, raw: raw.to_string() }),
    }
}

pub fn parse_prediction(text: &str) -> Result<PredictionOutcome, ParseError> {
    let raw = |field| find_field(text, field).ok_or(ParseError::MissingField(field));

    let prob_raw = raw(Field::MortalityProbability)?;
    let los_raw = raw(Field::PredictedLosDays)?;
    let conf_raw = raw(Field::Confidence)?;
    let factors_raw = raw(Field::KeyFactors)?;

    let mortality_probability = parse_number(Field::MortalityProbability, prob_raw)?;
    if !(0.0..=1.0).contains(&mortality_probability) {
        return Err(ParseError::Range { field: Field::MortalityProbability, value: mortality_probability });
    }
    let predicted_los_days = parse_number(Field::PredictedLosDays, los_raw)?;
    if predicted_los_days <= 0.0 || predicted_los_days > MAX_LOS_DAYS {
        return Err(ParseError::Range { field: Field::PredictedLosDays, value: predicted_los_days });
    }
    let confidence = conf_raw
        .parse::<Confidence>()
        .map_err(|_| ParseError::Format { field: Field::Confidence, raw: conf_raw.to_string() })?;
    let key_factors: Vec<String> = factors_raw
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if key_factors.is_empty() {
        return Err(ParseError::Format { field: Field::KeyFactors, raw: factors_raw.to_string() });
    }

    Ok(PredictionOutcome {
        mortality_probability,
        predicted_los_days,
        confidence,
        key_factors,
        raw_text: text.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
    #[error("APACHE blend weight {0} outside [0, 1]")]
    Blend(f64),
}

/// `Expired` iff `probability >= threshold`.
pub fn classify(probability: f64, threshold: f64) -> Result<OutcomeStatus, ClassifyError> {
    if !(0.0..=1.0).contains(&probability) {
        return Err(ClassifyError::Probability(probability));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ClassifyError::Threshold(threshold));
    }
    Ok(if probability >= threshold { OutcomeStatus::Expired } else { OutcomeStatus::Survived })
}

/// How a parsed prediction becomes a mortality call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scoring {
    pub threshold: f64,
    /// Weight given to the APACHE predicted mortality when it is mixed
    /// into the agent probability. 0 uses the agent alone.
    #[serde(default)]
    pub apache_blend: f64,
}

impl Default for Scoring {
    fn default() -> Self {
        Self::agent_only(DEFAULT_THRESHOLD)
    }
}

impl Scoring {
    pub fn agent_only(threshold: f64) -> Self {
        Self { threshold, apache_blend: 0.0 }
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ClassifyError::Threshold(self.threshold));
        }
        if !(0.0..=1.0).contains(&self.apache_blend) {
            return Err(ClassifyError::Blend(self.apache_blend));
        }
        Ok(())
    }

    /// Agent probability, mixed with APACHE when a weight is set and the
    /// APACHE value is known.
    pub fn probability(&self, agent: f64, apache: Option<f64>) -> f64 {
        match apache {
            Some(a) if self.apache_blend > 0.0 => (1.0 - self.apache_blend) * agent + self.apache_blend * a,
            _ => agent,
        }
    }

    pub fn classify(&self, agent: f64, apache: Option<f64>) -> Result<OutcomeStatus, ClassifyError> {
        self.validate()?;
        if !(0.0..=1.0).contains(&agent) {
            return Err(ClassifyError::Probability(agent));
        }
        classify(self.probability(agent, apache), self.threshold)
    }
}
