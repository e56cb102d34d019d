// Range checks are written as negated comparisons so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod evaluation;
pub mod experiment;
pub mod ingestion;
pub mod orchestrator;
pub mod prediction;
pub mod provider;
pub mod text;
pub mod transparency;
