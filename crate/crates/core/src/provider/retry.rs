use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ErrorClass, Provider, ProviderError, ProviderRequest, ProviderResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(rename = "base_backoff_ms", with = "millis")]
    pub base_backoff: Duration,
    pub backoff_multiplier: f64,
    pub retryable_classes: BTreeSet<ErrorClass>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff: Duration::from_millis(500),
            backoff_multiplier: 2.0,
            retryable_classes: ErrorClass::TRANSIENT.into_iter().collect(),
        }
    }
}

impl RetryPolicy {
    /// Policy with no waiting between attempts.
    pub fn immediate(max_attempts: u32) -> Self {
        Self { max_attempts, base_backoff: Duration::ZERO, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts < 1 {
            return Err("max_attempts must be at least 1".into());
        }
        if !(self.backoff_multiplier.is_finite() && self.backoff_multiplier >= 1.0) {
            return Err(format!("backoff_multiplier {} must be >= 1", self.backoff_multiplier));
        }
        Ok(())
    }

    /// Wait after failed attempt `attempt` (1-based): `base * multiplier^(attempt-1)`.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = self.backoff_multiplier.powi(attempt.saturating_sub(1) as i32);
        self.base_backoff.mul_f64(factor)
    }

    pub fn is_retryable(&self, class: ErrorClass) -> bool {
        self.retryable_classes.contains(&class)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error} (after {attempts} attempt(s))")]
pub struct RetryError {
    pub error: ProviderError,
    pub attempts: u32,
}

/// Calls `provider` until success, a non-retryable error, or
/// `policy.max_attempts` attempts.
pub async fn with_retries<P: Provider + ?Sized>(
    provider: &P,
    request: &ProviderRequest,
    policy: &RetryPolicy,
) -> Result<ProviderResponse, RetryError> {
    if let Err(message) = policy.validate() {
        return Err(RetryError { error: ProviderError::new(ErrorClass::Config, message), attempts: 0 });
    }
    let mut attempt = 0;
    loop {
        attempt += 1;
        match provider.complete(request).await {
            Ok(mut response) => {
                response.attempts_used = attempt;
                return Ok(response);
            }
            Err(error) => {
                if !policy.is_retryable(error.class) || attempt >= policy.max_attempts {
                    return Err(RetryError { error, attempts: attempt });
                }
                tracing::debug!(attempt, class = %error.class, "retrying provider call");
                let delay = policy.delay_after(attempt);
                if !delay.is_zero() {
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_delays() {
        let p = RetryPolicy {
            base_backoff: Duration::from_millis(100),
            backoff_multiplier: 3.0,
            ..RetryPolicy::default()
        };
        assert_eq!(p.delay_after(1), Duration::from_millis(100));
        assert_eq!(p.delay_after(2), Duration::from_millis(300));
        assert_eq!(p.delay_after(3), Duration::from_millis(900));
    }

    #[test]
    fn policy_json_uses_millis() {
        let p: RetryPolicy = serde_json::from_str(r#"{"max_attempts": 5, "base_backoff_ms": 20}"#).unwrap();
        assert_eq!(p.max_attempts, 5);
        assert_eq!(p.base_backoff, Duration::from_millis(20));
        assert!(p.is_retryable(ErrorClass::RateLimit));
        assert!(!p.is_retryable(ErrorClass::Auth));
    }

    #[test]
    fn validation() {
        assert!(RetryPolicy::immediate(0).validate().is_err());
        let p = RetryPolicy { backoff_multiplier: 0.5, ..RetryPolicy::default() };
        assert!(p.validate().is_err());
    }
}
