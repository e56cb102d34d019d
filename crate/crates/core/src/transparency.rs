//! Pattern-coverage transparency scoring.
//!
//! A rubric lists, per dimension, weighted criteria and the marker patterns
//! that evidence each criterion. A criterion scores the percentage of its
//! patterns found in the text; a dimension is the weighted mean of its
//! criteria; the overall score is the plain mean of the three dimensions.
//! Matching is case-insensitive and treats any whitespace run (including
//! line breaks) as a single space.

use std::fmt;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

const DEFAULT_RUBRIC: &str = include_str!("../rubric/default_rubric.json");
const WEIGHT_TOLERANCE: f64 = 1e-9;
const SNIPPET_CONTEXT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Explainability,
    Interpretability,
    Traceability,
}

impl Dimension {
    pub const ALL: [Dimension; 3] =
        [Dimension::Explainability, Dimension::Interpretability, Dimension::Traceability];
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Explainability => "explainability",
            Dimension::Interpretability => "interpretability",
            Dimension::Traceability => "traceability",
        })
    }
}

/// A marker is either a literal phrase or a regex with an example phrase
/// that must match it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternSpec {
    Phrase(String),
    Regex { regex: String, example: String },
}

impl PatternSpec {
    pub fn source(&self) -> &str {
        match self {
            PatternSpec::Phrase(p) => p,
            PatternSpec::Regex { regex, .. } => regex,
        }
    }

    pub fn example(&self) -> &str {
        match self {
            PatternSpec::Phrase(p) => p,
            PatternSpec::Regex { example, .. } => example,
        }
    }

    fn compile(&self) -> Result<Regex, RubricError> {
        let expr = match self {
            PatternSpec::Phrase(p) => {
                let words: Vec<String> = p.split_whitespace().map(regex::escape).collect();
                if words.is_empty() {
                    return Err(RubricError::EmptyPattern);
                }
                let mut expr = words.join(r"\s+");
                if p.trim_start().starts_with(|c: char| c.is_alphanumeric()) {
                    expr = format!(r"\b{expr}");
                }
                if p.trim_end().ends_with(|c: char| c.is_alphanumeric()) {
                    expr.push_str(r"\b");
                }
                expr
            }
            PatternSpec::Regex { regex, .. } => regex.clone(),
        };
        RegexBuilder::new(&expr)
            .case_insensitive(true)
            .build()
            .map_err(|e| RubricError::BadPattern { pattern: self.source().to_string(), message: e.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSpec {
    pub name: String,
    pub weight: f64,
    pub patterns: Vec<PatternSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub dimension: Dimension,
    pub criteria: Vec<CriterionSpec>,
}

/// Serialized rubric file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricDocument {
    pub dimensions: Vec<DimensionSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum RubricError {
    #[error("reading rubric: {0}")]
    Io(#[from] std::io::Error),
    #[error("rubric JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dimension {0} is missing or repeated")]
    DimensionCount(Dimension),
    #[error("dimension {0} has no criteria")]
    NoCriteria(Dimension),
    #[error("criterion {0:?} has no patterns")]
    NoPatterns(String),
    #[error("empty pattern")]
    EmptyPattern,
    #[error("criterion {criterion:?}: weight {weight} must be finite and nonnegative")]
    BadWeight { criterion: String, weight: f64 },
    #[error("dimension {dimension} weights sum to {sum}, expected 1")]
    WeightSum { dimension: Dimension, sum: f64 },
    #[error("pattern {pattern:?}: {message}")]
    BadPattern { pattern: String, message: String },
    #[error("pattern {pattern:?} does not match its own example {example:?}")]
    ExampleMismatch { pattern: String, example: String },
}

#[derive(Debug, Clone)]
struct CompiledCriterion {
    name: String,
    weight: f64,
    patterns: Vec<(String, Regex)>,
}

#[derive(Debug, Clone)]
pub struct Rubric {
    document: RubricDocument,
    dimensions: Vec<(Dimension, Vec<CompiledCriterion>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub pattern: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionScore {
    pub criterion: String,
    pub weight: f64,
    pub score: f64,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub dimension: Dimension,
    pub criteria: Vec<CriterionScore>,
    pub score: f64,
}

impl DimensionScore {
    pub fn criterion(&self, name: &str) -> Option<&CriterionScore> {
        self.criteria.iter().find(|c| c.criterion == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransparencyReport {
    pub explainability: DimensionScore,
    pub interpretability: DimensionScore,
    pub traceability: DimensionScore,
    pub overall: f64,
}

impl TransparencyReport {
    pub fn dimensions(&self) -> [&DimensionScore; 3] {
        [&self.explainability, &self.interpretability, &self.traceability]
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn snippet(text: &str, start: usize, end: usize) -> String {
    let mut lo = start.saturating_sub(SNIPPET_CONTEXT);
    while !text.is_char_boundary(lo) {
        lo -= 1;
    }
    let mut hi = (end + SNIPPET_CONTEXT).min(text.len());
    while !text.is_char_boundary(hi) {
        hi += 1;
    }
    text[lo..hi].to_string()
}

impl Rubric {
    /// The rubric shipped in `rubric/default_rubric.json`. Compiled once;
    /// later calls clone the cached copy.
    pub fn default_rubric() -> Self {
        static DEFAULT: std::sync::LazyLock<Rubric> =
            std::sync::LazyLock::new(|| Rubric::from_json(DEFAULT_RUBRIC).expect("bundled rubric is valid"));
        DEFAULT.clone()
    }

    pub fn from_path(path: &Path) -> Result<Self, RubricError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(json: &str) -> Result<Self, RubricError> {
        Self::from_document(serde_json::from_str(json)?)
    }

    pub fn from_document(document: RubricDocument) -> Result<Self, RubricError> {
        let mut dimensions = Vec::new();
        for dim in Dimension::ALL {
            let mut specs = document.dimensions.iter().filter(|d| d.dimension == dim);
            let spec = specs.next().ok_or(RubricError::DimensionCount(dim))?;
            if specs.next().is_some() {
                return Err(RubricError::DimensionCount(dim));
            }
            if spec.criteria.is_empty() {
                return Err(RubricError::NoCriteria(dim));
            }
            let mut compiled = Vec::new();
            let mut sum = 0.0;
            for c in &spec.criteria {
                if !c.weight.is_finite() || c.weight < 0.0 {
                    return Err(RubricError::BadWeight { criterion: c.name.clone(), weight: c.weight });
                }
                if c.patterns.is_empty() {
                    return Err(RubricError::NoPatterns(c.name.clone()));
                }
                sum += c.weight;
                let mut patterns = Vec::new();
                for p in &c.patterns {
                    let re = p.compile()?;
                    if !re.is_match(&normalize(p.example())) {
                        return Err(RubricError::ExampleMismatch {
                            pattern: p.source().to_string(),
                            example: p.example().to_string(),
                        });
                    }
                    patterns.push((p.source().to_string(), re));
                }
                compiled.push(CompiledCriterion { name: c.name.clone(), weight: c.weight, patterns });
            }
            if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(RubricError::WeightSum { dimension: dim, sum });
            }
            dimensions.push((dim, compiled));
        }
        Ok(Self { document, dimensions })
    }

    pub fn document(&self) -> &RubricDocument {
        &self.document
    }

    /// A text containing every pattern's example, which scores 100 on all
    /// dimensions.
    pub fn complete_fixture(&self) -> String {
        self.document
            .dimensions
            .iter()
            .flat_map(|d| d.criteria.iter())
            .flat_map(|c| c.patterns.iter())
            .map(PatternSpec::example)
            .collect::<Vec<_>>()
            .join(". ")
    }

    pub fn score_dimension(&self, text: &str, dimension: Dimension) -> DimensionScore {
        self.score_normalized(&normalize(text), dimension)
    }

    fn score_normalized(&self, text: &str, dimension: Dimension) -> DimensionScore {
        let criteria_specs = &self
            .dimensions
            .iter()
            .find(|(d, _)| *d == dimension)
            .expect("rubric holds every dimension")
            .1;
        let mut criteria = Vec::with_capacity(criteria_specs.len());
        let mut score = 0.0;
        for c in criteria_specs {
            let evidence: Vec<Evidence> = c
                .patterns
                .iter()
                .filter_map(|(source, re)| {
                    re.find(text).map(|m| Evidence {
                        pattern: source.clone(),
                        snippet: snippet(text, m.start(), m.end()),
                    })
                })
                .collect();
            let s = (100.0 * evidence.len() as f64 / c.patterns.len() as f64).min(100.0);
            score += c.weight * s;
            criteria.push(CriterionScore { criterion: c.name.clone(), weight: c.weight, score: s, evidence });
        }
        DimensionScore { dimension, criteria, score: score.clamp(0.0, 100.0) }
    }

    /// Scores the concatenation of a prediction and its explanation.
    pub fn score_transparency(&self, prediction_text: &str, explanation_text: &str) -> TransparencyReport {
        let text = normalize(&format!("{prediction_text}\n{explanation_text}"));
        let explainability = self.score_normalized(&text, Dimension::Explainability);
        let interpretability = self.score_normalized(&text, Dimension::Interpretability);
        let traceability = self.score_normalized(&text, Dimension::Traceability);
        let overall = (explainability.score + interpretability.score + traceability.score) / 3.0;
        TransparencyReport { explainability, interpretability, traceability, overall }
    }
}

impl Default for Rubric {
    fn default() -> Self {
        Self::default_rubric()
    }
}

/// Scores with the bundled rubric.
pub fn score_transparency(prediction_text: &str, explanation_text: &str) -> TransparencyReport {
    Rubric::default_rubric().score_transparency(prediction_text, explanation_text)
}
