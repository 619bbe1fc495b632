//! Engine configuration: TOML file, defaults and command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::bounds::BoundsConfig;
use crate::clients::{
    Encoder, GenerationParams, Generator, RemoteConfig, RemoteEncoder, RemoteGenerator, StubEncoder, StubGenerator,
};
use crate::community::LeidenConfig;
use crate::metrics::AvgScope;
use crate::corpus::{DEFAULT_CHUNK_SIZE, MIN_CHUNK_SIZE};
use crate::retrieval::beam::BeamConfig;
use crate::retrieval::RetrievalConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    /// Knowledge-graph and glossary judges.
    #[default]
    Kg,
    /// Yes/no questions to the configured generator.
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeidenSettings {
    pub resolution: f64,
    pub max_iterations: usize,
    pub min_gain_epsilon: f64,
}

impl Default for LeidenSettings {
    fn default() -> Self {
        let d = LeidenConfig::<f64>::default();
        Self { resolution: d.resolution, max_iterations: d.max_iterations, min_gain_epsilon: d.min_gain_epsilon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientSettings {
    /// Force the deterministic in-process clients.
    pub stub: bool,
    /// Base URL of the remote service; without one the stub clients are used.
    pub endpoint: Option<String>,
    pub model: String,
    pub embedding_model: String,
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ClientSettings {
    fn default() -> Self {
        let r = RemoteConfig::default();
        Self {
            stub: false,
            endpoint: None,
            model: r.model.clone(),
            embedding_model: r.model,
            api_key_env: None,
            timeout_ms: r.timeout_ms,
            max_in_flight: r.max_in_flight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub chunk_size: usize,
    pub top_k: usize,
    pub beam_width: usize,
    /// Seeds community detection and generation.
    pub seed: u64,
    pub embedding_dimension: usize,
    /// Seed of the stub encoder; part of the index identity.
    pub embedding_seed: u64,
    pub map_parallelism: usize,
    pub temperature: f64,
    pub max_output_tokens: usize,
    pub judge: JudgeKind,
    /// Metrics averaged into the report's Avg column.
    pub avg_scope: AvgScope,
    pub leiden: LeidenSettings,
    pub client: ClientSettings,
    pub bounds: BoundsConfig,
}

impl Default for Config {
    fn default() -> Self {
        let beam = BeamConfig::default();
        let gen = GenerationParams::default();
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            top_k: beam.k,
            beam_width: beam.beam_width,
            seed: 42,
            embedding_dimension: 256,
            embedding_seed: 42,
            map_parallelism: 4,
            temperature: gen.temperature,
            max_output_tokens: gen.max_output_tokens,
            judge: JudgeKind::Kg,
            avg_scope: AvgScope::All,
            leiden: LeidenSettings::default(),
            client: ClientSettings::default(),
            bounds: BoundsConfig::default(),
        }
    }
}

/// Values given on the command line; each one replaces the configured value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub chunk_size: Option<usize>,
    pub top_k: Option<usize>,
    pub beam_width: Option<usize>,
    pub resolution: Option<f64>,
    pub seed: Option<u64>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub stub: bool,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))
    }

    /// Reads `path`, or returns the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, EngineError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| EngineError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.chunk_size {
            self.chunk_size = v;
        }
        if let Some(v) = o.top_k {
            self.top_k = v;
            self.beam_width = self.beam_width.max(v);
        }
        if let Some(v) = o.beam_width {
            self.beam_width = v;
        }
        if let Some(v) = o.resolution {
            self.leiden.resolution = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
            self.bounds.rng_seed = v;
        }
        if let Some(v) = &o.endpoint {
            self.client.endpoint = Some(v.clone());
        }
        if let Some(v) = &o.api_key_env {
            self.client.api_key_env = Some(v.clone());
        }
        if o.stub {
            self.client.stub = true;
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if self.chunk_size < MIN_CHUNK_SIZE {
            return bad(format!("chunk_size must be at least {MIN_CHUNK_SIZE}"));
        }
        self.beam().validate().map_err(EngineError::Config)?;
        if self.embedding_dimension == 0 {
            return bad("embedding_dimension must be positive".into());
        }
        if self.map_parallelism == 0 {
            return bad("map_parallelism must be positive".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be non-negative".into());
        }
        self.leiden_config().validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.bounds.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn beam(&self) -> BeamConfig {
        BeamConfig { k: self.top_k, beam_width: self.beam_width }
    }

    pub fn leiden_config(&self) -> LeidenConfig<f64> {
        LeidenConfig {
            resolution: self.leiden.resolution,
            max_iterations: self.leiden.max_iterations,
            min_gain_epsilon: self.leiden.min_gain_epsilon,
            rng_seed: self.seed,
        }
    }

    pub fn generation(&self) -> GenerationParams {
        GenerationParams { temperature: self.temperature, seed: self.seed, max_output_tokens: self.max_output_tokens }
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            beam: self.beam(),
            params: self.generation(),
            map_parallelism: self.map_parallelism,
            ..RetrievalConfig::default()
        }
    }

    pub fn uses_remote(&self) -> bool {
        !self.client.stub && self.client.endpoint.is_some()
    }

    fn remote(&self, model: &str) -> RemoteConfig {
        RemoteConfig {
            base_url: self.client.endpoint.clone().unwrap_or_default(),
            model: model.to_string(),
            api_key_env: self.client.api_key_env.clone(),
            timeout_ms: self.client.timeout_ms,
            max_in_flight: self.client.max_in_flight,
            ..RemoteConfig::default()
        }
    }
}

/// The generator and encoder every stage shares.
pub struct Clients {
    pub generator: Box<dyn Generator>,
    pub encoder: Box<dyn Encoder>,
}

impl Clients {
    pub fn stub(cfg: &Config) -> Self {
        Self {
            generator: Box::new(StubGenerator::new()),
            encoder: Box::new(StubEncoder::new(cfg.embedding_dimension, cfg.embedding_seed)),
        }
    }

    /// Remote clients when an endpoint is configured and stubs are not forced.
    /// Blocking HTTP clients must be created outside an async runtime.
    pub fn from_config(cfg: &Config) -> Result<Self, EngineError> {
        if !cfg.uses_remote() {
            return Ok(Self::stub(cfg));
        }
        let generator = RemoteGenerator::new(cfg.remote(&cfg.client.model))?;
        let encoder = RemoteEncoder::new(cfg.remote(&cfg.client.embedding_model), cfg.embedding_dimension)?;
        Ok(Self { generator: Box::new(generator), encoder: Box::new(encoder) })
    }
}
