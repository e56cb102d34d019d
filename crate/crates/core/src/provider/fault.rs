//! Scripted failure injection around any backend, used by tests and the
//! acceptance suite.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;

use super::mock::agent_tag;
use super::{ErrorClass, Provider, ProviderError, ProviderRequest, ProviderResponse};
use crate::agents::AgentName;

/// Fails matching requests with `class`. Each distinct request fails
/// `failures` times before being passed through; `usize::MAX` fails forever.
#[derive(Debug, Clone)]
pub struct FaultRule {
    pub agent: Option<AgentName>,
    pub user_contains: Option<String>,
    pub class: ErrorClass,
    pub failures: usize,
}

impl FaultRule {
    pub fn always(agent: AgentName, class: ErrorClass) -> Self {
        Self { agent: Some(agent), user_contains: None, class, failures: usize::MAX }
    }

    pub fn times(agent: AgentName, class: ErrorClass, failures: usize) -> Self {
        Self { agent: Some(agent), user_contains: None, class, failures }
    }

    pub fn for_text(mut self, needle: impl Into<String>) -> Self {
        self.user_contains = Some(needle.into());
        self
    }

    fn matches(&self, request: &ProviderRequest) -> bool {
        self.agent.is_none_or(|a| agent_tag(&request.system_text) == Some(a))
            && self.user_contains.as_deref().is_none_or(|n| request.user_text.contains(n))
    }
}

pub struct ScriptedFaults<P> {
    inner: P,
    rules: Vec<FaultRule>,
    seen: Mutex<HashMap<(usize, u64), usize>>,
    calls: AtomicUsize,
    injected: AtomicUsize,
}

impl<P> ScriptedFaults<P> {
    pub fn new(inner: P, rules: Vec<FaultRule>) -> Self {
        Self { inner, rules, seen: Mutex::new(HashMap::new()), calls: AtomicUsize::new(0), injected: AtomicUsize::new(0) }
    }

    /// Every call received, including injected failures.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn injected(&self) -> usize {
        self.injected.load(Ordering::SeqCst)
    }
}

fn request_key(request: &ProviderRequest) -> u64 {
    let mut h = DefaultHasher::new();
    request.system_text.hash(&mut h);
    request.user_text.hash(&mut h);
    request.seed.hash(&mut h);
    h.finish()
}

#[async_trait]
impl<P: Provider> Provider for ScriptedFaults<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = request_key(request);
        let fault = {
            let mut seen = self.seen.lock().expect("fault table poisoned");
            self.rules.iter().enumerate().find_map(|(i, rule)| {
                if !rule.matches(request) {
                    return None;
                }
                let count = seen.entry((i, key)).or_insert(0);
                (*count < rule.failures).then(|| {
                    *count += 1;
                    rule.class
                })
            })
        };
        match fault {
            Some(class) => {
                self.injected.fetch_add(1, Ordering::SeqCst);
                Err(ProviderError::new(class, "injected fault"))
            }
            None => self.inner.complete(request).await,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::MockProvider;

    fn req(agent: &str) -> ProviderRequest {
        ProviderRequest {
            model_id: "m".into(),
            system_text: format!("AGENT: {agent}"),
            user_text: "hello".into(),
            max_output_tokens: 10,
            temperature: 0.0,
            seed: 0,
        }
    }

    #[tokio::test]
    async fn fails_n_times_then_passes() {
        let p = ScriptedFaults::new(
            MockProvider::new(1),
            vec![FaultRule::times(AgentName::Integration, ErrorClass::RateLimit, 2)],
        );
        let r = req("integration");
        assert_eq!(p.complete(&r).await.unwrap_err().class, ErrorClass::RateLimit);
        assert!(p.complete(&r).await.is_err());
        assert!(p.complete(&r).await.is_ok());
        assert!(p.complete(&req("lab_analysis")).await.is_ok());
        assert_eq!((p.calls(), p.injected()), (4, 2));
    }

    #[tokio::test]
    async fn text_filter_narrows_rule() {
        let p = ScriptedFaults::new(
            MockProvider::new(1),
            vec![FaultRule::always(AgentName::LabAnalysis, ErrorClass::Auth).for_text("absent")],
        );
        assert!(p.complete(&req("lab_analysis")).await.is_ok());
    }
}
