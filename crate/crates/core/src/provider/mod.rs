//! Completion backends behind one interface, plus the retry wrapper.

mod fault;
mod http;
mod mock;
mod retry;

use std::fmt;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

pub use fault::{FaultRule, ScriptedFaults};
pub use http::{HttpConfig, HttpProvider};
pub use mock::MockProvider;
pub use retry::{with_retries, RetryError, RetryPolicy};

use crate::text::estimate_tokens;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub model_id: String,
    pub system_text: String,
    pub user_text: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Only consumed by deterministic backends; never sent over the wire.
    pub seed: u64,
}

impl ProviderRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.user_text.trim().is_empty() {
            return Err(ProviderError::new(ErrorClass::InvalidRequest, "user_text is empty"));
        }
        if self.max_output_tokens == 0 {
            return Err(ProviderError::new(ErrorClass::InvalidRequest, "max_output_tokens must be at least 1"));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(ProviderError::new(
                ErrorClass::InvalidRequest,
                format!("temperature {} must be finite and nonnegative", self.temperature),
            ));
        }
        Ok(())
    }

    pub fn input_token_estimate(&self) -> usize {
        estimate_tokens(&self.system_text) + estimate_tokens(&self.user_text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResponse {
    pub text: String,
    pub input_token_estimate: usize,
    pub output_token_estimate: usize,
    pub attempts_used: u32,
}

impl ProviderResponse {
    pub fn new(request: &ProviderRequest, text: String) -> Self {
        Self {
            input_token_estimate: request.input_token_estimate(),
            output_token_estimate: estimate_tokens(&text),
            text,
            attempts_used: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Timeout,
    RateLimit,
    ServerError,
    Network,
    Auth,
    Config,
    MalformedPayload,
    InvalidRequest,
}

impl ErrorClass {
    pub const TRANSIENT: [ErrorClass; 4] =
        [ErrorClass::Timeout, ErrorClass::RateLimit, ErrorClass::ServerError, ErrorClass::Network];

    pub fn is_transient(self) -> bool {
        Self::TRANSIENT.contains(&self)
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorClass::Timeout => "timeout",
            ErrorClass::RateLimit => "rate limit",
            ErrorClass::ServerError => "server error",
            ErrorClass::Network => "network",
            ErrorClass::Auth => "authentication",
            ErrorClass::Config => "configuration",
            ErrorClass::MalformedPayload => "malformed payload",
            ErrorClass::InvalidRequest => "invalid request",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{class} error: {message}")]
pub struct ProviderError {
    pub class: ErrorClass,
    pub message: String,
}

impl ProviderError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Self { class, message: message.into() }
    }
}

/// A text-completion backend. Implementations must tolerate concurrent calls.
#[async_trait]
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError>;
}

#[async_trait]
impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        (**self).complete(request).await
    }
}
