//! HTTP query service over an immutable loaded workspace.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::engine::{Clients, Config, EngineError, EngineState, QueryResponse};
use crate::retrieval::RetrievalError;

/// Largest `top_k` a request may ask for.
pub const MAX_TOP_K: usize = 64;

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<EngineState>,
    pub clients: Arc<Clients>,
    pub config: Arc<Config>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    symptoms: String,
    #[serde(default)]
    top_k: Option<usize>,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new().route("/v1/query", post(query)).route("/v1/health", get(health)).with_state(state)
}

async fn health(State(s): State<AppState>) -> Response {
    if !s.engine.is_current() {
        return error(StatusCode::CONFLICT, "workspace changed on disk; restart the service");
    }
    Json(json!({ "status": "ok", "workspace_digest": s.engine.manifest_digest })).into_response()
}

async fn query(State(s): State<AppState>, body: Bytes) -> Response {
    let req: QueryRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request body: {e}")),
    };
    if req.symptoms.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "symptoms must not be empty");
    }
    let mut cfg = (*s.config).clone();
    if let Some(k) = req.top_k {
        if k == 0 || k > MAX_TOP_K {
            return error(StatusCode::BAD_REQUEST, format!("top_k must lie in 1..={MAX_TOP_K}"));
        }
        cfg.top_k = k;
        cfg.beam_width = cfg.beam_width.max(k);
    }
    if !s.engine.is_current() {
        return error(StatusCode::CONFLICT, "workspace changed on disk; restart the service");
    }
    let (engine, clients) = (s.engine.clone(), s.clients.clone());
    let symptoms = req.symptoms;
    let result = tokio::task::spawn_blocking(move || crate::engine::cmd_query(&engine, &clients, &symptoms, &cfg)).await;
    match result {
        Ok(Ok(out)) => Json(QueryResponse::from(&out)).into_response(),
        Ok(Err(e)) => engine_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")),
    }
}

fn engine_error(e: EngineError) -> Response {
    let status = match &e {
        EngineError::InvalidWorkspace(_) | EngineError::MissingWorkspace(_) => StatusCode::CONFLICT,
        EngineError::Config(_) | EngineError::Usage(_) => StatusCode::BAD_REQUEST,
        EngineError::Pipeline(p) => match p.source {
            RetrievalError::InvalidInput(_) => StatusCode::BAD_REQUEST,
            RetrievalError::Client(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        },
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(status, e.to_string())
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

