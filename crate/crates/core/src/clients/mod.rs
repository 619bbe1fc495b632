//! Text-encoder and generator abstractions with a deterministic stub and a
//! remote HTTP implementation.

pub mod prompt;
pub mod remote;
pub mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompt::{Prompt, PromptRole};
pub use remote::{RemoteConfig, RemoteEncoder, RemoteGenerator, RetryPolicy};
pub use stub::{StubEncoder, StubGenerator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rate limited after {attempts} attempt(s): {message}")]
    Retryable { attempts: u32, message: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("environment variable {0} holding the api key is not set")]
    MissingApiKey(String),
    #[error("generator returned identical texts for a preference pair")]
    DegeneratePair,
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Retryable { .. })
    }
}

pub trait Encoder: Send + Sync {
    /// Stable identifier stored in index snapshots.
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f64>, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub seed: u64,
    pub max_output_tokens: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self { temperature: 0.0, seed: 42, max_output_tokens: 1024 }
    }
}

pub trait Generator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ClientError>;
}

/// Encodes after validating the input and the returned dimension.
pub fn encode(encoder: &dyn Encoder, text: &str) -> Result<Vec<f64>, ClientError> {
    if text.trim().is_empty() {
        return Err(ClientError::InvalidInput("cannot encode empty text".into()));
    }
    let v = encoder.encode(text)?;
    if v.len() != encoder.dimension() {
        return Err(ClientError::Protocol(format!(
            "encoder {} returned {} values, expected {}",
            encoder.name(),
            v.len(),
            encoder.dimension()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ClientError::Protocol("encoder returned a non-finite value".into()));
    }
    Ok(v)
}

/// Generates after validating the prompt; an empty completion is a protocol error.
pub fn generate(
    generator: &dyn Generator,
    prompt: &str,
    params: &GenerationParams,
) -> Result<String, ClientError> {
    if prompt.trim().is_empty() {
        return Err(ClientError::InvalidInput("empty prompt".into()));
    }
    let out = generator.generate(prompt, params)?;
    if out.trim().is_empty() {
        return Err(ClientError::Protocol(format!("{} returned an empty completion", generator.name())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub text_w: String,
    pub text_l: String,
    pub score_w: f64,
    pub score_l: f64,
}

const PAIR_INSTRUCTIONS: &str = "Write two candidate answers for the input, each headed by \
[CANDIDATE 1] or [CANDIDATE 2] followed by a line `score: <number in [0,1]>` rating \
completeness and safety. The candidates must differ.";

/// Asks for two candidates, orders them by score and rejects identical texts.
pub fn generate_scored_pair(
    generator: &dyn Generator,
    input: &str,
    params: &GenerationParams,
) -> Result<ScoredPair, ClientError> {
    let p = Prompt::new(PromptRole::Pair, PAIR_INSTRUCTIONS, input);
    let raw = generate(generator, &p.render(), params)?;
    let mut cands = parse_pair_response(&raw)?;
    if cands[0].1 == cands[1].1 {
        return Err(ClientError::DegeneratePair);
    }
    // Higher score wins; equal scores keep the generator's order.
    if cands[1].0 > cands[0].0 {
        cands.swap(0, 1);
    }
    let [(score_w, text_w), (score_l, text_l)] = cands;
    Ok(ScoredPair { text_w, text_l, score_w, score_l })
}

fn parse_pair_response(raw: &str) -> Result<[(f64, String); 2], ClientError> {
    let mut cands: Vec<(Option<f64>, String)> = Vec::new();
    for line in raw.lines() {
        if line.trim_start().starts_with("[CANDIDATE ") {
            cands.push((None, String::new()));
            continue;
        }
        let Some(cur) = cands.last_mut() else { continue };
        if cur.0.is_none() {
            if let Some(v) = line.trim().strip_prefix("score:") {
                let s: f64 = v.trim().parse().map_err(|_| {
                    ClientError::Protocol(format!("unparseable candidate score {:?}", v.trim()))
                })?;
                cur.0 = Some(s);
                continue;
            }
        }
        if !cur.1.is_empty() {
            cur.1.push('\n');
        }
        cur.1.push_str(line);
    }
    if cands.len() != 2 {
        return Err(ClientError::Protocol(format!("expected 2 candidates, found {}", cands.len())));
    }
    let mut out: Vec<(f64, String)> = Vec::with_capacity(2);
    for (s, t) in cands {
        let s = s.ok_or_else(|| ClientError::Protocol("candidate without a score line".into()))?;
        if !s.is_finite() {
            return Err(ClientError::Protocol("non-finite candidate score".into()));
        }
        let t = t.trim().to_string();
        if t.is_empty() {
            return Err(ClientError::Protocol("empty candidate text".into()));
        }
        out.push((s, t));
    }
    let b = out.pop().expect("two candidates");
    let a = out.pop().expect("two candidates");
    Ok([a, b])
}
