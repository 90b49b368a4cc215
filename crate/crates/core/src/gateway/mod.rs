//! Uniform client layer for answer-generation and judge models.
//!
//! Every generation flows through [`Gateway::generate`]: consult the
//! content-addressed cache, then dispatch to the provider (HTTP, mock, or
//! replay) under a bounded-concurrency pool, then persist the response. The
//! cache key covers the full logical request including the sample index, so
//! each of the k resamples is individually reproducible.

mod cache;
mod http;
mod mock;
mod pool;

pub use cache::{CacheEntry, ResponseCache};
pub use http::{
    default_response_path, default_template, extract_text, render_body, GEMINI_STYLE_PATH,
    GEMINI_STYLE_TEMPLATE, OPENAI_STYLE_PATH, OPENAI_STYLE_TEMPLATE,
};
pub use mock::{MockAnswer, MockQuestion, MockTables, DEFAULT_PUNT_RESPONSE};
pub use pool::{GatewayStats, Semaphore, StatsSnapshot};

use std::path::PathBuf;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::canon;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("authentication rejected (HTTP {status}) for model {model}")]
    Auth { status: u16, model: String },
    #[error("transport failure after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (last HTTP {s})")).unwrap_or_default())]
    Transport {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("missing recorded response for request digest {digest}")]
    MissingFixture { digest: String },
    #[error("cache failure: {0}")]
    Cache(String),
    #[error("offline mode forbids network call to model {0}")]
    Offline(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpOpenaiStyle,
    HttpGeminiStyle,
    Mock,
    Replay,
}

impl ProviderKind {
    pub fn is_http(self) -> bool {
        matches!(self, Self::HttpOpenaiStyle | Self::HttpGeminiStyle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub mode: DecodeMode,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_tokens() -> u32 {
    256
}

impl Decoding {
    pub fn greedy() -> Self {
        Self {
            mode: DecodeMode::Greedy,
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
        }
    }

    pub fn sample(temperature: f64) -> Self {
        Self {
            mode: DecodeMode::Sample,
            temperature,
            max_tokens: default_max_tokens(),
        }
    }
}

/// One model target. Mock and replay variants carry their own data; HTTP
/// variants may override the request template and response path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub provider: ProviderKind,
    pub model_name: String,
    #[serde(default)]
    pub endpoint_url: String,
    /// Name of the environment variable holding the API secret. The secret
    /// itself never reaches the cache or any log.
    #[serde(default)]
    pub auth_env_var: Option<String>,
    pub decoding: Decoding,
    #[serde(default)]
    pub request_template: Option<String>,
    #[serde(default)]
    pub response_path: Option<String>,
    #[serde(default)]
    pub mock_answers_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_tables: Option<MockTables>,
    #[serde(default)]
    pub replay_dir: Option<PathBuf>,
}

impl ModelSpec {
    pub fn mock(model_name: impl Into<String>, tables: MockTables) -> Self {
        Self {
            provider: ProviderKind::Mock,
            model_name: model_name.into(),
            endpoint_url: String::new(),
            auth_env_var: None,
            decoding: Decoding::greedy(),
            request_template: None,
            response_path: None,
            mock_answers_path: None,
            mock_tables: Some(tables),
            replay_dir: None,
        }
    }

    pub fn replay(model_name: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        Self {
            provider: ProviderKind::Replay,
            model_name: model_name.into(),
            endpoint_url: String::new(),
            auth_env_var: None,
            decoding: Decoding::greedy(),
            request_template: None,
            response_path: None,
            mock_answers_path: None,
            mock_tables: None,
            replay_dir: Some(dir.into()),
        }
    }

    pub fn with_decoding(mut self, decoding: Decoding) -> Self {
        self.decoding = decoding;
        self
    }

    /// Same model, forced greedy (used for primary answers and judging).
    pub fn as_greedy(&self) -> Self {
        Self {
            decoding: Decoding {
                mode: DecodeMode::Greedy,
                ..self.decoding
            },
            ..self.clone()
        }
    }

    /// Same model, sampling at the given temperature (used for resamples).
    pub fn as_sampling(&self, temperature: f64) -> Self {
        Self {
            decoding: Decoding {
                mode: DecodeMode::Sample,
                temperature,
                ..self.decoding
            },
            ..self.clone()
        }
    }

    /// Validate the spec, resolving mock tables from disk when needed.
    pub fn validated(mut self, offline: bool) -> Result<Self, GatewayError> {
        match self.provider {
            ProviderKind::Mock => {
                if self.mock_tables.is_none() {
                    let path = self.mock_answers_path.as_deref().ok_or_else(|| {
                        GatewayError::Config(format!(
                            "mock model {} needs mock_tables or mock_answers_path",
                            self.model_name
                        ))
                    })?;
                    self.mock_tables = Some(MockTables::load(path)?);
                }
                self.mock_tables.as_ref().expect("just set").validate()?;
            }
            ProviderKind::Replay => {
                let dir = self.replay_dir.as_deref().ok_or_else(|| {
                    GatewayError::Config(format!(
                        "replay model {} needs replay_dir",
                        self.model_name
                    ))
                })?;
                if !dir.is_dir() {
                    return Err(GatewayError::Config(format!(
                        "replay dir {} does not exist",
                        dir.display()
                    )));
                }
            }
            ProviderKind::HttpOpenaiStyle | ProviderKind::HttpGeminiStyle => {
                if offline {
                    return Err(GatewayError::Config(format!(
                        "offline mode forbids HTTP model {}",
                        self.model_name
                    )));
                }
                if self.endpoint_url.is_empty() {
                    return Err(GatewayError::Config(format!(
                        "HTTP model {} needs endpoint_url",
                        self.model_name
                    )));
                }
                if let Some(template) = &self.request_template {
                    for forbidden in ["\"tools\"", "\"functions\"", "\"tool_choice\""] {
                        if template.contains(forbidden) {
                            return Err(GatewayError::Config(format!(
                                "request template for {} uses unsupported feature {forbidden}",
                                self.model_name
                            )));
                        }
                    }
                }
            }
        }
        if self.decoding.mode == DecodeMode::Sample
            && (!self.decoding.temperature.is_finite() || self.decoding.temperature <= 0.0)
        {
            return Err(GatewayError::Config(format!(
                "sampling temperature must be positive for model {}",
                self.model_name
            )));
        }
        Ok(self)
    }
}

/// Retry schedule for transient HTTP failures. Total attempts never exceed
/// `max_attempts`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay_ms: 250,
            max_delay_ms: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub cache_dir: PathBuf,
    pub pool_size: usize,
    pub retry: RetryPolicy,
    /// Forbid all network calls; only mock and replay providers may serve.
    pub offline: bool,
    /// Run seed; part of every cache key and the source of mock streams.
    pub seed: u64,
}

impl GatewayConfig {
    pub fn new(cache_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            cache_dir: cache_dir.into(),
            pool_size: 8,
            retry: RetryPolicy::default(),
            offline: false,
            seed,
        }
    }

    pub fn offline(mut self, value: bool) -> Self {
        self.offline = value;
        self
    }

    pub fn pool_size(mut self, value: usize) -> Self {
        self.pool_size = value;
        self
    }

    pub fn retry(mut self, value: RetryPolicy) -> Self {
        self.retry = value;
        self
    }
}

pub struct Gateway {
    cache: ResponseCache,
    pool: Semaphore,
    retry: RetryPolicy,
    offline: bool,
    seed: u64,
    stats: GatewayStats,
    agent: OnceLock<ureq::Agent>,
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Self {
        Self {
            cache: ResponseCache::new(config.cache_dir),
            pool: Semaphore::new(config.pool_size),
            retry: config.retry,
            offline: config.offline,
            seed: config.seed,
            stats: GatewayStats::default(),
            agent: OnceLock::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    /// Canonical request value; excludes auth material by construction.
    /// Greedy requests omit the temperature so logically identical requests
    /// hash identically.
    fn canonical_request(&self, spec: &ModelSpec, prompt: &str, sample_index: u32) -> Value {
        let mut decoding = json!({
            "max_tokens": spec.decoding.max_tokens,
            "mode": match spec.decoding.mode {
                DecodeMode::Greedy => "greedy",
                DecodeMode::Sample => "sample",
            },
        });
        if spec.decoding.mode == DecodeMode::Sample {
            decoding["temperature"] = json!(spec.decoding.temperature);
        }
        json!({
            "decoding": decoding,
            "model": spec.model_name,
            "prompt": prompt,
            "sample_index": sample_index,
            "seed": self.seed,
        })
    }

    /// Generate a response for the prompt. `sample_index` 0 with greedy
    /// decoding is the primary answer; resamples use indices 1..=k.
    pub fn generate(
        &self,
        spec: &ModelSpec,
        prompt: &str,
        sample_index: u32,
    ) -> Result<String, GatewayError> {
        let request = self.canonical_request(spec, prompt, sample_index);
        let canonical = canon::canonical_json(&request);
        let digest = canon::digest_bytes(canonical.as_bytes());

        if let Some(text) = self.cache.get(&digest)? {
            self.stats.record_cache_hit();
            return Ok(text);
        }
        self.stats.record_cache_miss();

        let _permit = self.pool.acquire();
        let _in_flight = self.stats.enter_provider();
        let text = match spec.provider {
            ProviderKind::Mock => {
                let tables = spec.mock_tables.as_ref().ok_or_else(|| {
                    GatewayError::Config(format!(
                        "mock model {} has no tables loaded; call validated() first",
                        spec.model_name
                    ))
                })?;
                tables.respond(
                    prompt,
                    spec.decoding.mode == DecodeMode::Greedy,
                    self.seed,
                    sample_index,
                )
            }
            ProviderKind::Replay => {
                let dir = spec.replay_dir.as_deref().ok_or_else(|| {
                    GatewayError::Config(format!(
                        "replay model {} has no replay_dir",
                        spec.model_name
                    ))
                })?;
                let recorded = ResponseCache::new(dir);
                recorded.get(&digest)?.ok_or(GatewayError::MissingFixture {
                    digest: digest.clone(),
                })?
            }
            ProviderKind::HttpOpenaiStyle | ProviderKind::HttpGeminiStyle => {
                if self.offline {
                    return Err(GatewayError::Offline(spec.model_name.clone()));
                }
                let temperature = match spec.decoding.mode {
                    DecodeMode::Greedy => 0.0,
                    DecodeMode::Sample => spec.decoding.temperature,
                };
                let template = spec
                    .request_template
                    .as_deref()
                    .unwrap_or_else(|| default_template(spec.provider));
                let path = spec
                    .response_path
                    .as_deref()
                    .unwrap_or_else(|| default_response_path(spec.provider));
                let body = render_body(
                    template,
                    &spec.model_name,
                    prompt,
                    temperature,
                    spec.decoding.max_tokens,
                )?;
                let agent = self.agent.get_or_init(|| {
                    ureq::Agent::new_with_config(
                        ureq::Agent::config_builder()
                            .http_status_as_error(false)
                            .timeout_global(Some(std::time::Duration::from_secs(120)))
                            .build(),
                    )
                });
                http::execute(agent, spec, &body, path, &self.retry, &self.stats)?
            }
        };
        self.cache.put(&digest, &canonical, &text)?;
        Ok(text)
    }
}
