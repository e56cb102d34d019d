//! Chat-completions client for an OpenAI-compatible endpoint.

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Semaphore;

use super::{ErrorClass, Provider, ProviderError, ProviderRequest, ProviderResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored in configuration.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_in_flight: 8,
            timeout_secs: 60,
        }
    }
}

pub struct HttpProvider {
    config: HttpConfig,
    api_key: String,
    client: reqwest::Client,
    permits: Semaphore,
}

impl fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpProvider")
            .field("config", &self.config)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpProvider {
    /// Reads the key from `config.api_key_env`.
    pub fn from_env(config: HttpConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.trim().is_empty()).ok_or_else(|| {
            ProviderError::new(
                ErrorClass::Config,
                format!("environment variable {} is not set", config.api_key_env),
            )
        })?;
        Self::with_key(config, key)
    }

    pub fn with_key(config: HttpConfig, api_key: String) -> Result<Self, ProviderError> {
        if config.max_in_flight == 0 {
            return Err(ProviderError::new(ErrorClass::Config, "max_in_flight must be at least 1"));
        }
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| ProviderError::new(ErrorClass::Config, e.to_string()))?;
        let permits = Semaphore::new(config.max_in_flight);
        Ok(Self { config, api_key, client, permits })
    }
}

fn classify_status(status: u16) -> ErrorClass {
    match status {
        401 | 403 => ErrorClass::Auth,
        408 => ErrorClass::Timeout,
        429 => ErrorClass::RateLimit,
        500..=599 => ErrorClass::ServerError,
        _ => ErrorClass::InvalidRequest,
    }
}

fn classify_transport(e: &reqwest::Error) -> ErrorClass {
    if e.is_timeout() {
        ErrorClass::Timeout
    } else if e.is_decode() {
        ErrorClass::MalformedPayload
    } else {
        ErrorClass::Network
    }
}

#[async_trait]
impl Provider for HttpProvider {
    fn name(&self) -> &str {
        "http"
    }

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        request.validate()?;
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| ProviderError::new(ErrorClass::Config, "provider closed"))?;
        let body = json!({
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
        });
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let resp = self
            .client
            .post(url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| ProviderError::new(classify_transport(&e), e.without_url().to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::new(classify_status(status.as_u16()), format!("HTTP {}", status.as_u16())));
        }
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| ProviderError::new(classify_transport(&e), e.without_url().to_string()))?;
        let payload: serde_json::Value = serde_json::from_slice(&bytes)
            .map_err(|e| ProviderError::new(ErrorClass::MalformedPayload, e.to_string()))?;
        let text = payload
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| ProviderError::new(ErrorClass::MalformedPayload, "missing choices[0].message.content"))?;
        Ok(ProviderResponse::new(request, text.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert_eq!(classify_status(401), ErrorClass::Auth);
        assert_eq!(classify_status(429), ErrorClass::RateLimit);
        assert_eq!(classify_status(503), ErrorClass::ServerError);
        assert_eq!(classify_status(400), ErrorClass::InvalidRequest);
        assert_eq!(classify_status(408), ErrorClass::Timeout);
    }

    #[test]
    fn missing_env_names_variable() {
        let cfg = HttpConfig { api_key_env: "ICU_AGENTS_TEST_UNSET_KEY".into(), ..Default::default() };
        let err = HttpProvider::from_env(cfg).unwrap_err();
        assert_eq!(err.class, ErrorClass::Config);
        assert!(err.message.contains("ICU_AGENTS_TEST_UNSET_KEY"));
    }

    #[test]
    fn debug_redacts_key() {
        let p = HttpProvider::with_key(HttpConfig::default(), "sk-secret-value".into()).unwrap();
        assert!(!format!("{p:?}").contains("sk-secret-value"));
    }
}
