use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use icu_agents::agents::{AgentName, APACHE_LOS_LABEL, APACHE_MORTALITY_LABEL};
use icu_agents::prediction::parse_prediction;
use icu_agents::provider::*;
use serde_json::{json, Value};

fn request(agent: &str, user: &str) -> ProviderRequest {
    ProviderRequest {
        model_id: "gpt-4o".into(),
        system_text: format!("AGENT: {agent}\nMISSION: test"),
        user_text: user.into(),
        max_output_tokens: 800,
        temperature: 0.0,
        seed: 42,
    }
}

fn policy(max_attempts: u32, base_ms: u64) -> RetryPolicy {
    RetryPolicy { max_attempts, base_backoff: Duration::from_millis(base_ms), ..RetryPolicy::default() }
}

#[tokio::test(start_paused = true)]
async fn two_transient_failures_then_success() {
    let p = ScriptedFaults::new(MockProvider::new(1), vec![FaultRule::times(AgentName::Prediction, ErrorClass::Timeout, 2)]);
    let start = tokio::time::Instant::now();
    let resp = with_retries(&p, &request("prediction", "x"), &policy(3, 100)).await.unwrap();
    assert_eq!(resp.attempts_used, 3);
    // waits of 100 ms then 200 ms
    assert_eq!(start.elapsed(), Duration::from_millis(300));
    assert_eq!(p.calls(), 3);
}

#[tokio::test(start_paused = true)]
async fn fatal_error_is_not_retried() {
    let p = ScriptedFaults::new(MockProvider::new(1), vec![FaultRule::always(AgentName::Prediction, ErrorClass::Auth)]);
    let err = with_retries(&p, &request("prediction", "x"), &policy(5, 100)).await.unwrap_err();
    assert_eq!((err.error.class, err.attempts), (ErrorClass::Auth, 1));
    assert_eq!(p.calls(), 1);
}

#[tokio::test(start_paused = true)]
async fn always_transient_stops_at_max_attempts() {
    let p = ScriptedFaults::new(
        MockProvider::new(1),
        vec![FaultRule::always(AgentName::Prediction, ErrorClass::ServerError)],
    );
    let err = with_retries(&p, &request("prediction", "x"), &policy(2, 10)).await.unwrap_err();
    assert_eq!((err.error.class, err.attempts), (ErrorClass::ServerError, 2));
    assert_eq!(p.calls(), 2);
}

#[tokio::test]
async fn malformed_payload_class_is_fatal_by_default() {
    let p = ScriptedFaults::new(
        MockProvider::new(1),
        vec![FaultRule::always(AgentName::Prediction, ErrorClass::MalformedPayload)],
    );
    let err = with_retries(&p, &request("prediction", "x"), &policy(4, 0)).await.unwrap_err();
    assert_eq!(err.attempts, 1);
}

#[tokio::test]
async fn seeded_mock_predictions_all_parse() {
    for i in 0..1000u64 {
        let pm = (i % 97) as f64 / 100.0;
        let user = format!("{APACHE_MORTALITY_LABEL} {pm}\n{APACHE_LOS_LABEL} {}\nAge: 64 years", 1.0 + (i % 13) as f64);
        let mut req = request(if i % 2 == 0 { "prediction" } else { "sas_all_in_one" }, &user);
        req.seed = i;
        let resp = MockProvider::new(i).complete(&req).await.unwrap();
        parse_prediction(&resp.text).unwrap_or_else(|e| panic!("seed {i}: {e}\n{}", resp.text));
    }
}

#[tokio::test]
async fn mock_matches_golden_text() {
    let req = request(
        "prediction",
        &format!("{APACHE_MORTALITY_LABEL} 0.42\n{APACHE_LOS_LABEL} 3.5\nKEY ABNORMALITIES\n- lactate: 3.1 mmol/L"),
    );
    let text = MockProvider::new(2024).complete(&req).await.unwrap().text;
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/mock_prediction.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, format!("{text}\n")).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, golden.trim_end_matches('\n'));
}

#[derive(Default)]
struct ServerState {
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    last_body: Mutex<Option<Value>>,
    last_auth: Mutex<Option<String>>,
    /// Status codes to return before succeeding.
    script: Mutex<Vec<u16>>,
    malformed: std::sync::atomic::AtomicBool,
}

async fn handler(State(s): State<Arc<ServerState>>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, String) {
    s.calls.fetch_add(1, Ordering::SeqCst);
    let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    s.peak.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(20)).await;
    s.in_flight.fetch_sub(1, Ordering::SeqCst);
    *s.last_auth.lock().unwrap() = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    *s.last_body.lock().unwrap() = Some(body);
    let next = {
        let mut script = s.script.lock().unwrap();
        (!script.is_empty()).then(|| script.remove(0))
    };
    if let Some(code) = next {
        return (StatusCode::from_u16(code).unwrap(), "{}".into());
    }
    if s.malformed.load(Ordering::SeqCst) {
        return (StatusCode::OK, "{\"choices\": []}".into());
    }
    (StatusCode::OK, json!({"choices": [{"message": {"role": "assistant", "content": "hello from server"}}]}).to_string())
}

async fn server() -> (String, Arc<ServerState>) {
    let state = Arc::new(ServerState::default());
    let app = Router::new().route("/v1/chat/completions", post(handler)).with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), state)
}

fn client(base_url: String, max_in_flight: usize) -> HttpProvider {
    let cfg = HttpConfig { base_url, max_in_flight, timeout_secs: 5, ..HttpConfig::default() };
    HttpProvider::with_key(cfg, "sk-test-secret".into()).unwrap()
}

#[tokio::test]
async fn http_sends_chat_completion_shape() {
    let (url, state) = server().await;
    let p = client(url, 4);
    let resp = p.complete(&request("lab_analysis", "labs here")).await.unwrap();
    assert_eq!(resp.text, "hello from server");
    assert_eq!(resp.attempts_used, 1);
    assert_eq!(state.calls.load(Ordering::SeqCst), 1);
    let body = state.last_body.lock().unwrap().clone().unwrap();
    assert_eq!(body["model"], "gpt-4o");
    assert_eq!(body["max_tokens"], 800);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1], json!({"role": "user", "content": "labs here"}));
    assert!(body.get("seed").is_none());
    assert_eq!(state.last_auth.lock().unwrap().as_deref(), Some("Bearer sk-test-secret"));
}

#[tokio::test]
async fn http_status_classes_and_retry() {
    let (url, state) = server().await;
    let p = client(url, 4);
    *state.script.lock().unwrap() = vec![429, 503];
    let resp = with_retries(&p, &request("lab_analysis", "x"), &policy(3, 1)).await.unwrap();
    assert_eq!(resp.attempts_used, 3);

    *state.script.lock().unwrap() = vec![401];
    let err = with_retries(&p, &request("lab_analysis", "x"), &policy(3, 1)).await.unwrap_err();
    assert_eq!((err.error.class, err.attempts), (ErrorClass::Auth, 1));
    assert!(!err.to_string().contains("sk-test-secret"));

    state.malformed.store(true, Ordering::SeqCst);
    let err = p.complete(&request("lab_analysis", "x")).await.unwrap_err();
    assert_eq!(err.class, ErrorClass::MalformedPayload);
}

#[tokio::test]
async fn http_connection_refused_is_network() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let p = client(format!("http://{addr}/v1"), 1);
    let err = p.complete(&request("lab_analysis", "x")).await.unwrap_err();
    assert_eq!(err.class, ErrorClass::Network);
}

#[tokio::test]
async fn http_in_flight_cap() {
    let (url, state) = server().await;
    let p = Arc::new(client(url, 2));
    let calls = (0..8).map(|i| {
        let p = p.clone();
        async move { p.complete(&request("lab_analysis", &format!("req {i}"))).await }
    });
    let results = futures::future::join_all(calls).await;
    assert!(results.iter().all(Result::is_ok));
    assert_eq!(state.calls.load(Ordering::SeqCst), 8);
    assert!(state.peak.load(Ordering::SeqCst) <= 2);
}
