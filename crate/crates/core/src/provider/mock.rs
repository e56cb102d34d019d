//! Deterministic offline backend.
//!
//! The agent is recognized from the `AGENT:` line of the system text and the
//! reply fills that agent's output contract. All variation comes from a
//! ChaCha stream keyed by a SHA-256 of the construction seed and the whole
//! request, so replies are stable across runs and machines.
//!
//! Prediction replies start from the APACHE predicted mortality and LOS found
//! in the prompt and add bounded noise, so on synthetic cohorts the emitted
//! probability tracks the hidden severity.

use async_trait::async_trait;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Provider, ProviderError, ProviderRequest, ProviderResponse};
use crate::agents::{
    AgentName, ACTUAL_OUTCOME_LABEL, APACHE_LOS_LABEL, APACHE_MORTALITY_LABEL, EXPLANATION_HEADING,
};
use crate::ingestion::OutcomeStatus;
use crate::prediction::{classify, parse_prediction, render_outcome, Confidence, PredictionOutcome, DEFAULT_THRESHOLD};

const EXPLANATION_BANK: &[&str] = &[
    "The most influential contributing factors are the lactate and creatinine trends derived from the laboratory results.",
    "Age and intubation status raise the baseline risk.",
    "The primary driver of risk is the hemodynamic picture, which is the most concerning finding.",
    "Because the vital signs show persistent tachycardia, deterioration is more likely.",
    "Therefore the estimate is consistent with the APACHE prediction.",
    "For clinicians and the care team this calls for close monitoring; for the family it is explained in plain language.",
    "We weighed the integrated assessment step-by-step before committing to a probability.",
    "The interaction between renal and circulatory failure adds complexity and uncertainty.",
    "If lactate clearance improves, an alternative scenario with lower risk becomes plausible.",
    "Data sources include vital signs, laboratory results, clinical notes and APACHE variables.",
    "Values were aggregated and the most recent readings were used.",
    "The language model was prompted with few-shot exemplars.",
    "The decision threshold and each agent in the pipeline are recorded for validation.",
    "Administrators can audit every decision in the run record.",
];

const FACTOR_TERMS: &[(&str, &str)] = &[
    ("lactate", "elevated lactate"),
    ("creatinine", "creatinine"),
    ("norepinephrine", "vasopressor requirement"),
    ("vasopressin", "vasopressor requirement"),
    ("intubated", "mechanical ventilation"),
    ("bun", "BUN"),
    ("spo2", "oxygen saturation"),
    ("hr ", "heart rate"),
    ("sbp", "systolic blood pressure"),
    ("age:", "age"),
];

#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng_for(&self, request: &ProviderRequest) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(request.seed.to_le_bytes());
        for part in [&request.model_id, &request.system_text, &request.user_text] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.update(request.max_output_tokens.to_le_bytes());
        h.update(request.temperature.to_bits().to_le_bytes());
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }

    /// The reply text for `request`. Pure function of the seed and request.
    pub fn respond(&self, request: &ProviderRequest) -> String {
        let mut rng = self.rng_for(request);
        let user = &request.user_text;
        match agent_tag(&request.system_text) {
            Some(AgentName::LabAnalysis) => lab_reply(&mut rng, user),
            Some(AgentName::VitalsAnalysis) => vitals_reply(&mut rng),
            Some(AgentName::ContextAnalysis) => context_reply(&mut rng, user),
            Some(AgentName::Integration) => integration_reply(&mut rng, user),
            Some(AgentName::Prediction) => {
                let outcome = predict(&mut rng, user);
                format!(
                    "Integrating the upstream findings with the APACHE reference values.\n\n{}",
                    render_outcome(&outcome)
                )
            }
            Some(AgentName::SasAllInOne) => {
                let outcome = predict(&mut rng, user);
                let explanation = explanation(&mut rng, 4..=10);
                format!("{}\n\n{EXPLANATION_HEADING}\n{explanation}", render_outcome(&outcome))
            }
            Some(AgentName::Transparency) => explanation(&mut rng, 6..=12),
            Some(AgentName::Validation) => validation_reply(&mut rng, user),
            None => format!("Acknowledged ({:08x}).", rng.random::<u32>()),
        }
    }
}

#[async_trait]
impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        request.validate()?;
        Ok(ProviderResponse::new(request, self.respond(request)))
    }
}

pub(crate) fn agent_tag(system_text: &str) -> Option<AgentName> {
    system_text
        .lines()
        .find_map(|l| l.strip_prefix("AGENT:"))
        .and_then(|name| name.trim().parse().ok())
}

fn number_after(text: &str, label: &str) -> Option<f64> {
    text.lines().find_map(|line| {
        let rest = line.trim().strip_prefix(label)?;
        rest.split_whitespace().next()?.trim_end_matches([';', ',']).parse().ok()
    })
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

fn predict(rng: &mut ChaCha8Rng, user: &str) -> PredictionOutcome {
    let p = match number_after(user, APACHE_MORTALITY_LABEL) {
        Some(pm) => pm + rng.random_range(-0.15..0.15),
        None => 0.5 + rng.random_range(-0.3..0.3),
    };
    let mortality_probability = round_to(p.clamp(0.01, 0.99), 2);
    let los = match number_after(user, APACHE_LOS_LABEL) {
        Some(l) => l * rng.random_range(0.75..1.3),
        None => rng.random_range(1.5..9.0),
    };
    let predicted_los_days = round_to(los.clamp(0.2, 365.0), 1);
    let distance = (mortality_probability - 0.5).abs();
    let confidence = if distance > 0.3 {
        Confidence::High
    } else if distance > 0.15 {
        Confidence::Medium
    } else {
        Confidence::Low
    };
    let lower = user.to_lowercase();
    let mut key_factors: Vec<String> = Vec::new();
    for (needle, factor) in FACTOR_TERMS {
        if lower.contains(needle) && !key_factors.iter().any(|f| f == factor) {
            key_factors.push((*factor).to_string());
        }
    }
    if key_factors.is_empty() {
        key_factors.push("APACHE severity".into());
    }
    let keep = rng.random_range(1..=key_factors.len().min(4));
    let picked = index::sample(rng, key_factors.len(), keep);
    let mut idx: Vec<usize> = picked.into_vec();
    idx.sort_unstable();
    PredictionOutcome {
        mortality_probability,
        predicted_los_days,
        confidence,
        key_factors: idx.into_iter().map(|i| key_factors[i].clone()).collect(),
        raw_text: String::new(),
    }
}

fn explanation(rng: &mut ChaCha8Rng, count: std::ops::RangeInclusive<usize>) -> String {
    let n = rng.random_range(count).min(EXPLANATION_BANK.len());
    let mut idx = index::sample(rng, EXPLANATION_BANK.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| EXPLANATION_BANK[i]).collect::<Vec<_>>().join(" ")
}

fn bulleted_lines<'a>(user: &'a str, section: &str) -> Vec<&'a str> {
    user.split("\n\n")
        .find(|block| block.starts_with(section))
        .map(|block| block.lines().skip(1).filter(|l| l.starts_with("- ")).collect())
        .unwrap_or_default()
}

fn lab_reply(rng: &mut ChaCha8Rng, user: &str) -> String {
    let labs = bulleted_lines(user, "KEY ABNORMALITIES");
    let mut findings: Vec<String> = labs
        .iter()
        .filter(|_| rng.random_bool(0.6))
        .take(4)
        .map(|l| format!("{} flagged for review", l.trim_start_matches("- ")))
        .collect();
    if findings.is_empty() {
        findings.push("no lab value clearly outside reference range".into());
    }
    format!(
        "KEY ABNORMALITIES\n- {}\n\nAPACHE RELEVANT FINDINGS\nAcute physiology burden is {}.",
        findings.join("\n- "),
        ["low", "moderate", "high"][rng.random_range(0..3)]
    )
}

fn vitals_reply(rng: &mut ChaCha8Rng) -> String {
    let pick = |rng: &mut ChaCha8Rng, opts: &[&'static str]| opts[rng.random_range(0..opts.len())];
    format!(
        "PHYSIOLOGICAL STABILITY\n{}\n\nRESPIRATORY FUNCTION\n{}\n\nCARDIOVASCULAR PERFORMANCE\n{}",
        pick(rng, &["Stable over the recent window.", "Labile with intermittent deterioration.", "Progressively unstable."]),
        pick(rng, &["Oxygenation adequate.", "Borderline saturation on support.", "Hypoxemia despite support."]),
        pick(rng, &["Heart rate and SBP within range.", "Tachycardic with soft pressures.", "Hypotension with compensatory tachycardia."]),
    )
}

fn context_reply(rng: &mut ChaCha8Rng, user: &str) -> String {
    let lower = user.to_lowercase();
    let mut dx = Vec::new();
    if lower.contains("vasopressor") || lower.contains("norepinephrine") {
        dx.push("shock requiring vasopressors");
    }
    if lower.contains("ventilat") {
        dx.push("respiratory failure");
    }
    if lower.contains("oliguria") {
        dx.push("acute kidney injury");
    }
    if dx.is_empty() {
        dx.push("no acute organ failure documented");
    }
    format!(
        "DIAGNOSES\n{}\n\nRISK FACTORS\nAge and comorbid burden as documented.\n\nTRAJECTORY\n{}",
        dx.join("; "),
        ["Improving.", "Unchanged.", "Worsening."][rng.random_range(0..3)]
    )
}

fn integration_reply(rng: &mut ChaCha8Rng, user: &str) -> String {
    let n_sections = ["[lab_analysis output]", "[vitals_analysis output]", "[context_analysis output]"]
        .iter()
        .filter(|m| user.contains(*m))
        .count();
    format!(
        "SYSTEM-BY-SYSTEM ASSESSMENT\nFindings from {n_sections} upstream analyses reviewed by organ system.\n\nICU RISK PRIORITIES\n{}",
        ["Hemodynamic support first.", "Respiratory support first.", "Renal protection and fluid balance first."]
            [rng.random_range(0..3)]
    )
}

fn validation_reply(rng: &mut ChaCha8Rng, user: &str) -> String {
    let predicted = parse_prediction(user).ok();
    let actual_line = user.lines().find_map(|l| l.trim().strip_prefix(ACTUAL_OUTCOME_LABEL));
    let actual_status = actual_line.map(|l| {
        if l.trim_start().starts_with(OutcomeStatus::Expired.as_str()) {
            OutcomeStatus::Expired
        } else {
            OutcomeStatus::Survived
        }
    });
    let actual_los = actual_line.and_then(|l| number_after(l.split("LOS").nth(1)?.trim(), ""));
    let assessment = match (&predicted, actual_status) {
        (Some(p), Some(a)) if classify(p.mortality_probability, DEFAULT_THRESHOLD).ok() == Some(a) => "CORRECT",
        _ => "INCORRECT",
    };
    let los_error = match (&predicted, actual_los) {
        (Some(p), Some(a)) => round_to((p.predicted_los_days - a).abs(), 2),
        _ => 0.0,
    };
    let vars = predicted
        .map(|p| p.key_factors.join("; "))
        .unwrap_or_else(|| "none identified".into());
    format!(
        "PREDICTION_ASSESSMENT: {assessment}\nLOS_ERROR_DAYS: {los_error}\nKEY_CONTRIBUTING_VARIABLES: {vars}\nIMPROVEMENT_INSIGHTS: {}",
        ["Weight renal trends more heavily.", "Incorporate fluid balance.", "Track lactate clearance explicitly."]
            [rng.random_range(0..3)]
    )
}
