use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::fewshot::FewShotExemplar;
use super::spec::{AgentName, AgentSpec, OutputContract, SectionSource};
use crate::ingestion::{FeatureBundle, OutcomeLabel, VitalSample};
use crate::prediction::render_prediction_contract;
use crate::text::{estimate_tokens, truncate_chars, TRUNCATION_MARKER};

pub const DEFAULT_TOKEN_BUDGET: usize = 10_000;
pub const NONE_REPORTED: &str = "NONE REPORTED";

pub const APACHE_MORTALITY_LABEL: &str = "APACHE predicted mortality:";
pub const APACHE_LOS_LABEL: &str = "APACHE predicted ICU LOS (days):";
pub const ACTUAL_OUTCOME_LABEL: &str = "Actual ICU outcome:";
pub const EXPLANATION_HEADING: &str = "EXPLANATION:";

pub const VALIDATION_CONTRACT: &str = "PREDICTION_ASSESSMENT: <CORRECT|INCORRECT>
LOS_ERROR_DAYS: <number>
KEY_CONTRIBUTING_VARIABLES: <variable; variable; ...>
IMPROVEMENT_INSIGHTS: <one paragraph>";

/// Everything a node may draw on when rendering. `actual_outcome` is only
/// populated for the validation node.
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub features: &'a FeatureBundle,
    pub upstream: &'a BTreeMap<AgentName, String>,
    pub exemplars: Option<&'a [FewShotExemplar]>,
    pub actual_outcome: Option<&'a OutcomeLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system_text: String,
    pub user_text: String,
}

impl RenderedPrompt {
    pub fn token_estimate(&self) -> usize {
        estimate_tokens(&self.system_text) + estimate_tokens(&self.user_text)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("agent {agent} is missing upstream output from {missing}")]
    MissingUpstream { agent: AgentName, missing: AgentName },
    #[error("agent {agent} requests the actual outcome, which is only given to the validation node")]
    OutcomeUnavailable { agent: AgentName },
    #[error("agent {agent} prompt needs {tokens} tokens after truncation, budget is {budget}")]
    OverBudget { agent: AgentName, tokens: usize, budget: usize },
}

/// Caps applied progressively when a prompt exceeds its budget.
#[derive(Debug, Clone, Copy, Default)]
struct Limits {
    note_chars: Option<usize>,
    medications: Option<usize>,
    labs: Option<usize>,
    upstream_chars: Option<usize>,
}

impl Limits {
    /// Truncation order: notes, then medications, then labs, then upstream
    /// text. Vitals and APACHE data are never cut.
    fn schedule() -> Vec<Limits> {
        let mut out = vec![Limits::default()];
        let mut cur = Limits::default();
        for n in [2_000, 1_000, 500, 250, 100, 0] {
            cur.note_chars = Some(n);
            out.push(cur);
        }
        for n in [10, 5, 0] {
            cur.medications = Some(n);
            out.push(cur);
        }
        for n in [20, 10, 5, 0] {
            cur.labs = Some(n);
            out.push(cur);
        }
        for n in [8_000, 4_000, 2_000, 1_000, 400] {
            cur.upstream_chars = Some(n);
            out.push(cur);
        }
        out
    }
}

pub fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>, suffix: &str) -> String {
    v.map(|x| format!("{}{suffix}", format_value(x))).unwrap_or_else(|| "n/a".into())
}

pub fn format_vital(v: &VitalSample) -> String {
    format!(
        "- t+{} min: HR {}, SBP {}, SpO2 {}, Temp {}",
        v.offset_minutes,
        opt(v.heart_rate, " bpm"),
        opt(v.sbp, " mmHg"),
        opt(v.spo2, "%"),
        opt(v.temperature, " C"),
    )
}

fn system_text(spec: &AgentSpec) -> String {
    let mut out = format!("AGENT: {}\nMISSION: {}\n\nOUTPUT CONTRACT:\n", spec.name, spec.mission);
    match spec.output_contract {
        OutputContract::FreeText => {
            let headings: Vec<&str> = spec.template.iter().map(|s| s.heading.as_str()).collect();
            let _ = write!(
                out,
                "Answer in plain text. Organize the analysis under these headings, each on its own line: {}.",
                headings.join(", ")
            );
        }
        OutputContract::PredictionTemplate => {
            let _ = write!(
                out,
                "Report the prediction using exactly these four labeled lines, one per line:\n{}",
                render_prediction_contract()
            );
            if spec.name == AgentName::SasAllInOne {
                let _ = write!(
                    out,
                    "\nAfter the four lines add a section starting with {EXPLANATION_HEADING} that explains the reasoning behind the prediction."
                );
            }
        }
        OutputContract::ValidationTemplate => {
            let _ = write!(out, "Respond using exactly these labeled lines:\n{VALIDATION_CONTRACT}");
        }
    }
    out
}

fn render_source(
    spec: &AgentSpec,
    source: &SectionSource,
    ctx: &PromptContext<'_>,
    limits: Limits,
) -> Result<String, RenderError> {
    let f = ctx.features;
    let mut out = String::new();
    match source {
        SectionSource::Demographics => {
            let d = &f.demographics;
            let _ = write!(out, "Stay {}\nAge: {:.0} years\nSex: {}", d.stay_id, d.age, d.sex.as_str());
        }
        SectionSource::Labs => {
            let cap = limits.labs.unwrap_or(usize::MAX);
            for l in f.distinct_labs.iter().take(cap) {
                let _ = writeln!(
                    out,
                    "- {}: {} {} (t{:+} min)",
                    l.name,
                    format_value(l.value),
                    l.unit,
                    l.offset_minutes
                );
            }
            if f.distinct_labs.len() > cap {
                let _ = write!(out, "({} more lab results omitted) {TRUNCATION_MARKER}", f.distinct_labs.len() - cap);
            }
        }
        SectionSource::ApacheFindings => {
            let a = &f.apache;
            let _ = writeln!(out, "{APACHE_MORTALITY_LABEL} {}", opt(a.apache_predicted_mortality, ""));
            let _ = writeln!(out, "{APACHE_LOS_LABEL} {}", opt(a.apache_predicted_los, ""));
            let _ = writeln!(out, "APS variables:");
            if a.aps_variables.is_empty() {
                let _ = write!(out, "{NONE_REPORTED}");
            }
            for (k, v) in &a.aps_variables {
                let _ = writeln!(out, "- {k}: {}", format_value(*v));
            }
        }
        SectionSource::Vitals => {
            for v in &f.recent_vitals {
                let _ = writeln!(out, "{}", format_vital(v));
            }
        }
        SectionSource::RespiratoryVitals => {
            for v in f.recent_vitals.iter().filter(|v| v.spo2.is_some()) {
                let _ = writeln!(out, "- t+{} min: SpO2 {}", v.offset_minutes, opt(v.spo2, "%"));
            }
        }
        SectionSource::CardiovascularVitals => {
            for v in f.recent_vitals.iter().filter(|v| v.heart_rate.is_some() || v.sbp.is_some()) {
                let _ = writeln!(
                    out,
                    "- t+{} min: HR {}, SBP {}",
                    v.offset_minutes,
                    opt(v.heart_rate, " bpm"),
                    opt(v.sbp, " mmHg")
                );
            }
        }
        SectionSource::Notes => {
            let notes: Vec<String> = f
                .selected_notes
                .iter()
                .map(|n| {
                    let body = match limits.note_chars {
                        Some(c) => truncate_chars(&n.text, c),
                        None => n.text.clone(),
                    };
                    format!("[{} note, t+{} min]\n{}", n.author_role.as_str(), n.offset_minutes, body)
                })
                .collect();
            out = notes.join("\n\n");
        }
        SectionSource::Medications => {
            let cap = limits.medications.unwrap_or(usize::MAX);
            for m in f.top_medications.iter().take(cap) {
                if m.dose_text.is_empty() {
                    let _ = writeln!(out, "- {}", m.drug_name);
                } else {
                    let _ = writeln!(out, "- {} ({})", m.drug_name, m.dose_text);
                }
            }
            if f.top_medications.len() > cap {
                let _ = write!(out, "({} more medications omitted) {TRUNCATION_MARKER}", f.top_medications.len() - cap);
            }
        }
        SectionSource::Exemplars => {
            if let Some(ex) = ctx.exemplars {
                let blocks: Vec<String> = ex.iter().enumerate().map(|(i, e)| e.render(i + 1)).collect();
                out = blocks.join("\n\n");
            }
        }
        SectionSource::ActualOutcome => {
            let o = ctx.actual_outcome.ok_or(RenderError::OutcomeUnavailable { agent: spec.name })?;
            let _ = write!(out, "{ACTUAL_OUTCOME_LABEL} {}; actual ICU LOS {:.2} days", o.status, o.actual_los_days);
        }
        SectionSource::Upstream(agent) => {
            let text = ctx
                .upstream
                .get(agent)
                .ok_or(RenderError::MissingUpstream { agent: spec.name, missing: *agent })?;
            let body = match limits.upstream_chars {
                Some(c) => truncate_chars(text, c),
                None => text.clone(),
            };
            let _ = write!(out, "[{agent} output]\n{}", body.trim());
        }
    }
    Ok(out.trim_end().to_string())
}

fn user_text(spec: &AgentSpec, ctx: &PromptContext<'_>, limits: Limits) -> Result<String, RenderError> {
    let mut sections = Vec::with_capacity(spec.template.len());
    for section in &spec.template {
        let mut parts = Vec::new();
        for source in &section.sources {
            let body = render_source(spec, source, ctx, limits)?;
            if !body.trim().is_empty() {
                parts.push(body);
            }
        }
        let body = if parts.is_empty() { NONE_REPORTED.to_string() } else { parts.join("\n\n") };
        sections.push(format!("{}\n{}", section.heading, body));
    }
    Ok(sections.join("\n\n"))
}

/// Renders the system and user text for one node, truncating notes, then
/// medications, then labs, then upstream text until the estimate fits
/// `budget_tokens`.
pub fn render_prompt(
    spec: &AgentSpec,
    ctx: &PromptContext<'_>,
    budget_tokens: usize,
) -> Result<RenderedPrompt, RenderError> {
    let system_text = system_text(spec);
    let mut last_tokens = 0;
    for limits in Limits::schedule() {
        let prompt = RenderedPrompt { system_text: system_text.clone(), user_text: user_text(spec, ctx, limits)? };
        last_tokens = prompt.token_estimate();
        if last_tokens <= budget_tokens {
            return Ok(prompt);
        }
    }
    Err(RenderError::OverBudget { agent: spec.name, tokens: last_tokens, budget: budget_tokens })
}

/// Format reminder appended to the user text when a prediction response
/// fails to parse.
pub fn format_reminder(error: &str) -> String {
    format!(
        "\n\nFORMAT REMINDER: your previous answer could not be parsed ({error}). Reply again and include exactly these four labeled lines:\n{}",
        render_prediction_contract()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::build_few_shot;
    use crate::ingestion::*;

    fn record(id: u64, status: OutcomeStatus) -> PatientRecord {
        PatientRecord {
            stay_id: StayId(id),
            age: 67.0,
            sex: Sex::Male,
            vitals: (0..3)
                .map(|i| VitalSample {
                    offset_minutes: i * 5,
                    heart_rate: Some(100.0),
                    sbp: Some(95.0),
                    spo2: Some(93.0),
                    temperature: None,
                })
                .collect(),
            labs: vec![LabResult { name: "lactate".into(), value: 3.4, unit: "mmol/L".into(), offset_minutes: 30 }],
            notes: vec![ClinicalNote { author_role: AuthorRole::Physician, offset_minutes: 10, text: "septic shock".into() }],
            medications: vec![MedicationEntry { drug_name: "norepinephrine".into(), offset_minutes: 5, dose_text: "0.1 mcg/kg/min".into() }],
            apache: ApacheBundle {
                aps_variables: [("creatinine".to_string(), 2.1)].into_iter().collect(),
                apache_predicted_mortality: Some(0.41),
                apache_predicted_los: Some(4.5),
            },
            outcome: OutcomeLabel { status, actual_los_days: 6.0 },
        }
    }

    #[test]
    fn integration_without_lab_upstream_fails() {
        let f = extract_features(&record(1, OutcomeStatus::Expired));
        let mut upstream = BTreeMap::new();
        upstream.insert(AgentName::VitalsAnalysis, "vitals ok".to_string());
        upstream.insert(AgentName::ContextAnalysis, "context ok".to_string());
        let ctx = PromptContext { features: &f, upstream: &upstream, exemplars: None, actual_outcome: None };
        let err = render_prompt(&AgentSpec::default_for(AgentName::Integration), &ctx, DEFAULT_TOKEN_BUDGET).unwrap_err();
        assert_eq!(err, RenderError::MissingUpstream { agent: AgentName::Integration, missing: AgentName::LabAnalysis });
        assert!(err.to_string().contains("lab_analysis"));
    }

    #[test]
    fn prediction_prompt_embeds_exemplars_and_apache() {
        let pool = vec![record(1, OutcomeStatus::Expired), record(2, OutcomeStatus::Survived)];
        let exemplars = build_few_shot(&pool).unwrap();
        let f = extract_features(&record(3, OutcomeStatus::Expired));
        let upstream: BTreeMap<_, _> = [(AgentName::Integration, "integrated view".to_string())].into();
        let ctx = PromptContext { features: &f, upstream: &upstream, exemplars: Some(&exemplars), actual_outcome: None };
        let spec = AgentSpec::default_for(AgentName::Prediction);
        let p = render_prompt(&spec, &ctx, DEFAULT_TOKEN_BUDGET).unwrap();
        assert!(p.user_text.contains("=== EXEMPLAR 1: EXPIRED ==="));
        assert!(p.user_text.contains("=== EXEMPLAR 2: SURVIVED ==="));
        assert!(p.user_text.contains("APACHE RELEVANT FINDINGS"));
        assert!(p.user_text.contains("APACHE predicted mortality: 0.41"));
        assert!(p.user_text.contains("integrated view"));
        assert!(p.system_text.contains("MORTALITY_PROBABILITY"));
        assert!(p.system_text.starts_with("AGENT: prediction\nMISSION: "));
        assert_eq!(p, render_prompt(&spec, &ctx, DEFAULT_TOKEN_BUDGET).unwrap());
    }

    #[test]
    fn absent_data_renders_none_reported() {
        let mut r = record(1, OutcomeStatus::Expired);
        r.medications.clear();
        for v in &mut r.vitals {
            v.spo2 = None;
        }
        let f = extract_features(&r);
        let upstream = BTreeMap::new();
        let ctx = PromptContext { features: &f, upstream: &upstream, exemplars: None, actual_outcome: None };
        let ctx_prompt = render_prompt(&AgentSpec::default_for(AgentName::ContextAnalysis), &ctx, DEFAULT_TOKEN_BUDGET).unwrap();
        assert!(ctx_prompt.user_text.contains("TRAJECTORY\nNONE REPORTED"));
        let vit = render_prompt(&AgentSpec::default_for(AgentName::VitalsAnalysis), &ctx, DEFAULT_TOKEN_BUDGET).unwrap();
        assert!(vit.user_text.contains("RESPIRATORY FUNCTION\nNONE REPORTED"));
    }

    #[test]
    fn outcome_only_for_validation() {
        let f = extract_features(&record(1, OutcomeStatus::Expired));
        let upstream: BTreeMap<_, _> = [
            (AgentName::Prediction, "p".to_string()),
            (AgentName::Transparency, "t".to_string()),
        ]
        .into();
        let ctx = PromptContext { features: &f, upstream: &upstream, exemplars: None, actual_outcome: None };
        let spec = AgentSpec::default_for(AgentName::Validation);
        assert_eq!(
            render_prompt(&spec, &ctx, DEFAULT_TOKEN_BUDGET),
            Err(RenderError::OutcomeUnavailable { agent: AgentName::Validation })
        );
        let outcome = OutcomeLabel { status: OutcomeStatus::Expired, actual_los_days: 6.0 };
        let ctx = PromptContext { actual_outcome: Some(&outcome), ..ctx };
        let p = render_prompt(&spec, &ctx, DEFAULT_TOKEN_BUDGET).unwrap();
        assert!(p.user_text.contains("Actual ICU outcome: expired; actual ICU LOS 6.00 days"));
    }

    #[test]
    fn notes_are_cut_before_labs() {
        let mut r = record(1, OutcomeStatus::Expired);
        r.notes = (0..3)
            .map(|i| ClinicalNote { author_role: AuthorRole::Nurse, offset_minutes: i, text: "word ".repeat(800) })
            .collect();
        let f = extract_features(&r);
        let upstream = BTreeMap::new();
        let ctx = PromptContext { features: &f, upstream: &upstream, exemplars: None, actual_outcome: None };
        let spec = AgentSpec::default_for(AgentName::SasAllInOne);
        let full = render_prompt(&spec, &ctx, DEFAULT_TOKEN_BUDGET).unwrap();
        let budget = full.token_estimate() - 200;
        let cut = render_prompt(&spec, &ctx, budget).unwrap();
        assert!(cut.token_estimate() <= budget);
        assert!(cut.user_text.contains(TRUNCATION_MARKER));
        assert!(cut.user_text.contains("- lactate: 3.4 mmol/L"));
        assert!(cut.user_text.contains("norepinephrine"));
    }
}
