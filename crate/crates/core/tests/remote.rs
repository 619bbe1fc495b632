//! Remote clients against an in-process OpenAI-compatible mock.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use zfdt::clients::remote::{RemoteConfig, RemoteEncoder, RemoteGenerator, RetryPolicy};
use zfdt::clients::{ClientError, Encoder, GenerationParams, Generator};

#[derive(Clone, Default)]
struct Mock {
    /// Requests to reject with 429 before answering.
    throttle: Arc<AtomicUsize>,
    calls: Arc<AtomicUsize>,
    auth: Arc<Mutex<Vec<Option<String>>>>,
    bodies: Arc<Mutex<Vec<Value>>>,
}

impl Mock {
    fn record(&self, headers: &HeaderMap, body: Value) -> bool {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let auth = headers.get("authorization").and_then(|h| h.to_str().ok()).map(str::to_string);
        self.auth.lock().unwrap().push(auth);
        self.bodies.lock().unwrap().push(body);
        self.throttle.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok()
    }
}

async fn chat(State(m): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    if m.record(&headers, body.clone()) {
        return (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"})));
    }
    let prompt = body.pointer("/messages/0/content").and_then(Value::as_str).unwrap_or("");
    (StatusCode::OK, Json(json!({"choices": [{"message": {"role": "assistant", "content": format!("echo: {prompt}")}}]})))
}

async fn embeddings(State(m): State<Mock>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    if m.record(&headers, body) {
        return (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"})));
    }
    (StatusCode::OK, Json(json!({"data": [{"embedding": [0.6, 0.8, 0.0]}]})))
}

/// Serves the mock on an ephemeral port from a background thread; returns the base url.
fn spawn(mock: Mock) -> String {
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .with_state(mock);
    let std_listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    std_listener.set_nonblocking(true).unwrap();
    let addr = std_listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{addr}/v1")
}

fn config(base_url: String, api_key_env: Option<&str>) -> RemoteConfig {
    RemoteConfig {
        base_url,
        model: "mock-model".into(),
        api_key_env: api_key_env.map(str::to_string),
        timeout_ms: 5_000,
        max_in_flight: 2,
        retry: RetryPolicy { max_attempts: 3, base_delay_ms: 1 },
    }
}

#[test]
fn chat_completion_sends_model_prompt_and_bearer_token() {
    let mock = Mock::default();
    std::env::set_var("ZFDT_MOCK_KEY", "s3cret");
    let g = RemoteGenerator::new(config(spawn(mock.clone()), Some("ZFDT_MOCK_KEY"))).unwrap();
    let params = GenerationParams { temperature: 0.0, seed: 5, max_output_tokens: 64 };
    assert_eq!(g.generate("hello", &params).unwrap(), "echo: hello");
    assert_eq!(mock.auth.lock().unwrap()[0].as_deref(), Some("Bearer s3cret"));
    let body = &mock.bodies.lock().unwrap()[0];
    assert_eq!(body["model"], "mock-model");
    assert_eq!(body["seed"], 5);
    assert_eq!(body["max_tokens"], 64);
}

#[test]
fn embeddings_are_parsed_and_dimension_checked() {
    let mock = Mock::default();
    let url = spawn(mock.clone());
    let e = RemoteEncoder::new(config(url.clone(), None), 3).unwrap();
    assert_eq!(e.encode("fever").unwrap(), vec![0.6, 0.8, 0.0]);
    assert_eq!(mock.auth.lock().unwrap()[0], None);
    let wrong = RemoteEncoder::new(config(url, None), 4).unwrap();
    assert!(matches!(wrong.encode("fever"), Err(ClientError::Protocol(_))));
}

#[test]
fn rate_limits_are_retried_then_reported() {
    let mock = Mock::default();
    mock.throttle.store(2, Ordering::SeqCst);
    let url = spawn(mock.clone());
    let g = RemoteGenerator::new(config(url.clone(), None)).unwrap();
    assert_eq!(g.generate("again", &GenerationParams::default()).unwrap(), "echo: again");
    assert_eq!(mock.calls.load(Ordering::SeqCst), 3);

    mock.throttle.store(10, Ordering::SeqCst);
    let err = g.generate("again", &GenerationParams::default()).unwrap_err();
    assert!(matches!(err, ClientError::Retryable { attempts: 3, .. }), "{err:?}");
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let g = RemoteGenerator::new(config(format!("http://127.0.0.1:{port}/v1"), None)).unwrap();
    assert!(matches!(g.generate("x", &GenerationParams::default()), Err(ClientError::Transport { .. })));
}
