mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;
use zfdt::engine::{self, EngineState};
use zfdt::service::{router, AppState};

fn app(dir: &std::path::Path) -> (axum::Router, std::path::PathBuf) {
    let (state, clients, cfg) = common::build_fixture(dir);
    let ws = state.workspace.clone();
    let app = router(AppState { engine: Arc::new(state), clients: Arc::new(clients), config: Arc::new(cfg) });
    (app, ws)
}

async fn send(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn query(body: String) -> Request<Body> {
    Request::post("/v1/query").header("content-type", "application/json").body(Body::from(body)).unwrap()
}

#[tokio::test]
async fn query_returns_answer_locals_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    let (status, v) = send(&app, query(json!({"symptoms": "Bloody stools and abdominal pain", "top_k": 2}).to_string())).await;
    assert_eq!(status, StatusCode::OK);
    assert!(v["answer"].as_str().unwrap().ends_with(zfdt::retrieval::DISCLAIMER));
    assert!(!v["global_answer"].as_str().unwrap().is_empty());
    let locals = v["local_answers"].as_array().unwrap();
    assert!(!locals.is_empty());
    for l in locals {
        assert!(l["community_id"].is_u64() && l["category"].is_string() && l["text"].is_string() && l["score"].is_f64());
    }
    assert!(!v["trace"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn invalid_requests_are_400() {
    let dir = tempfile::tempdir().unwrap();
    let (app, _) = app(dir.path());
    for body in [
        json!({"symptoms": "   "}).to_string(),
        json!({"symptoms": "fever", "top_k": 0}).to_string(),
        json!({"symptoms": "fever", "top_k": 1000}).to_string(),
        json!({"top_k": 2}).to_string(),
        "not json".to_string(),
    ] {
        let (status, v) = send(&app, query(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
}

#[tokio::test]
async fn health_reports_digest_and_conflict_after_rebuild() {
    let dir = tempfile::tempdir().unwrap();
    let (app, ws) = app(dir.path());
    let health = || Request::get("/v1/health").body(Body::empty()).unwrap();
    let (status, v) = send(&app, health()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    let digest = EngineState::load(&ws).unwrap().manifest_digest;
    assert_eq!(v["workspace_digest"], json!(digest));

    // A rebuild with other settings replaces the manifest under the running service.
    let mut cfg = common::stub_config();
    cfg.top_k = 1;
    cfg.chunk_size = 256;
    let clients = zfdt::engine::Clients::from_config(&cfg).unwrap();
    tokio::task::spawn_blocking(move || engine::cmd_build(&common::fixture_corpus(), &ws, &cfg, &clients).unwrap())
        .await
        .unwrap();
    assert_eq!(send(&app, health()).await.0, StatusCode::CONFLICT);
    assert_eq!(send(&app, query(json!({"symptoms": "fever"}).to_string())).await.0, StatusCode::CONFLICT);
}
