//! OpenAI-compatible HTTP clients.
//!
//! Generation posts to `{base_url}/chat/completions`, encoding to
//! `{base_url}/embeddings`. Requests are retried with exponential backoff on
//! rate limits, 5xx responses and transport failures, and an in-process gate
//! caps the number of concurrent requests.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ClientError, Encoder, GenerationParams, Generator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay_ms: 250 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. `None` sends no auth header.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: None,
            timeout_ms: 60_000,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Counting semaphore.
#[derive(Debug)]
struct Gate {
    cap: usize,
    used: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(cap: usize) -> Self {
        Self { cap: cap.max(1), used: Mutex::new(0), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.cap {
            used = self.cv.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.cv.notify_one();
    }
}

struct Http {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

enum Failure {
    RateLimited(String),
    Transient(String),
    Fatal(ClientError),
}

impl Http {
    fn new(cfg: RemoteConfig) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| ClientError::Transport { attempts: 0, message: e.to_string() })?;
        let gate = Gate::new(cfg.max_in_flight);
        Ok(Self { cfg, client, gate })
    }

    fn token(&self) -> Result<Option<String>, ClientError> {
        match &self.cfg.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| ClientError::MissingApiKey(var.clone())),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ClientError> {
        let token = self.token()?;
        let url = format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path);
        let attempts = self.cfg.retry.max_attempts.max(1);
        let mut last = Failure::Transient(String::new());
        for attempt in 1..=attempts {
            let outcome = {
                let _permit = self.gate.acquire();
                self.once(&url, token.as_deref(), body)
            };
            match outcome {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(f) => {
                    tracing::debug!(attempt, url = %url, "remote call failed, retrying");
                    last = f;
                }
            }
            if attempt < attempts {
                let delay = self.cfg.retry.base_delay_ms.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(delay));
            }
        }
        Err(match last {
            Failure::RateLimited(message) => ClientError::Retryable { attempts, message },
            Failure::Transient(message) => ClientError::Transport { attempts, message },
            Failure::Fatal(e) => e,
        })
    }

    fn once(&self, url: &str, token: Option<&str>, body: &Value) -> Result<Value, Failure> {
        let mut req = self.client.post(url).json(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(Failure::RateLimited(format!("HTTP 429 from {url}")));
        }
        if status.is_server_error() {
            return Err(Failure::Transient(format!("HTTP {} from {url}", status.as_u16())));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Failure::Fatal(ClientError::Protocol(format!(
                "HTTP {} from {url}: {}",
                status.as_u16(),
                text.chars().take(200).collect::<String>()
            ))));
        }
        resp.json::<Value>()
            .map_err(|e| Failure::Fatal(ClientError::Protocol(format!("invalid JSON body: {e}"))))
    }
}

pub struct RemoteGenerator {
    http: Http,
    id: String,
}

impl RemoteGenerator {
    pub fn new(cfg: RemoteConfig) -> Result<Self, ClientError> {
        let id = format!("remote:{}", cfg.model);
        Ok(Self { http: Http::new(cfg)?, id })
    }
}

impl Generator for RemoteGenerator {
    fn name(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ClientError> {
        if prompt.trim().is_empty() {
            return Err(ClientError::InvalidInput("empty prompt".into()));
        }
        let body = json!({
            "model": self.http.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
            "seed": params.seed,
        });
        let v = self.http.post("chat/completions", &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Protocol("response lacks choices[0].message.content".into()))
    }
}

pub struct RemoteEncoder {
    http: Http,
    dimension: usize,
    id: String,
}

impl RemoteEncoder {
    pub fn new(cfg: RemoteConfig, dimension: usize) -> Result<Self, ClientError> {
        let id = format!("remote:{}", cfg.model);
        Ok(Self { http: Http::new(cfg)?, dimension, id })
    }
}

impl Encoder for RemoteEncoder {
    fn name(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        if text.trim().is_empty() {
            return Err(ClientError::InvalidInput("cannot encode empty text".into()));
        }
        let body = json!({"model": self.http.cfg.model, "input": text});
        let v = self.http.post("embeddings", &body)?;
        let arr = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientError::Protocol("response lacks data[0].embedding".into()))?;
        let out: Option<Vec<f64>> = arr.iter().map(Value::as_f64).collect();
        let out = out.ok_or_else(|| ClientError::Protocol("embedding contains a non-number".into()))?;
        if out.len() != self.dimension {
            return Err(ClientError::Protocol(format!(
                "embedding has {} values, expected {}",
                out.len(),
                self.dimension
            )));
        }
        Ok(out)
    }
}
