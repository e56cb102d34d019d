//! Agent specifications, few-shot exemplars and token-budgeted prompt
//! rendering.

mod fewshot;
mod render;
mod spec;

pub use fewshot::{build_few_shot, completeness_score, FewShotError, FewShotExemplar};
pub use render::{
    format_reminder, format_value, format_vital, render_prompt, PromptContext, RenderError,
    RenderedPrompt, ACTUAL_OUTCOME_LABEL, APACHE_LOS_LABEL, APACHE_MORTALITY_LABEL,
    DEFAULT_TOKEN_BUDGET, EXPLANATION_HEADING, NONE_REPORTED, VALIDATION_CONTRACT,
};
pub use spec::{AgentName, AgentSpec, OutputContract, PromptSection, SectionSource, SpecError, DEFAULT_MODEL_ID};
pub use crate::text::truncate_to_budget;
