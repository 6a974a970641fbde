//! Inference backends that return per-position top-k logprobs.
//!
//! Two implementations share the [`Backend`] trait: an HTTP client for
//! completion endpoints and a scripted mock. [`complete_batch`] fans a list
//! of prompts out over a backend with a bound on requests in flight.

mod batch;
#[cfg(feature = "http")]
pub mod http;
pub mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::types::{GenerationTrace, InvariantError, RenderedPrompt};

pub use batch::{complete_batch, run_bounded, BatchOutput};
#[cfg(feature = "http")]
pub use http::HttpBackend;
pub use mock::{MockBackend, MockScript};

pub const API_KEY_ENV: &str = "FTP_HARNESS_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server returned HTTP {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, attempts: u32, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } => true,
            BackendError::Status { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BackendConfigRepr")]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    pub model_name: String,
    pub top_k: usize,
    pub n_positions: usize,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

#[derive(Deserialize)]
struct BackendConfigRepr {
    kind: BackendKind,
    #[serde(default)]
    base_url: Option<String>,
    #[serde(default = "default_model")]
    model_name: String,
    #[serde(default = "default_top_k")]
    top_k: usize,
    #[serde(default = "default_positions")]
    n_positions: usize,
    #[serde(default = "default_timeout")]
    timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    max_in_flight: usize,
}

fn default_model() -> String {
    "mock".to_owned()
}
fn default_top_k() -> usize {
    50
}
fn default_positions() -> usize {
    2
}
fn default_timeout() -> u64 {
    60_000
}
fn default_in_flight() -> usize {
    4
}

impl TryFrom<BackendConfigRepr> for BackendConfig {
    type Error = InvariantError;

    fn try_from(r: BackendConfigRepr) -> Result<Self, Self::Error> {
        let cfg = BackendConfig {
            kind: r.kind,
            base_url: r.base_url,
            model_name: r.model_name,
            top_k: r.top_k,
            n_positions: r.n_positions,
            timeout_ms: r.timeout_ms,
            max_in_flight: r.max_in_flight,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl BackendConfig {
    pub fn mock(model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            model_name: model_name.into(),
            top_k: default_top_k(),
            n_positions: default_positions(),
            timeout_ms: default_timeout(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn http(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            base_url: Some(base_url.into()),
            ..Self::mock(model_name)
        }
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        let fail = |msg: &str| Err(InvariantError::new("BackendConfig", msg));
        if self.kind == BackendKind::Http && self.base_url.as_deref().is_none_or(str::is_empty) {
            return fail("kind = http requires base_url");
        }
        if self.top_k < 1 {
            return fail("top_k must be >= 1");
        }
        if self.n_positions < 1 {
            return fail("n_positions must be >= 1");
        }
        if self.max_in_flight < 1 {
            return fail("max_in_flight must be >= 1");
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// Retry schedule for transport failures and 5xx responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base, 2×base, 4×base, ...
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

/// A source of next-token distributions.
pub trait Backend: Send + Sync {
    fn config(&self) -> &BackendConfig;

    /// Top-k candidates for `config().n_positions` positions along the
    /// greedy continuation of `prompt`.
    fn complete(&self, prompt: &RenderedPrompt) -> Result<GenerationTrace, BackendError>;

    /// Greedy text completion of at most `max_tokens` tokens.
    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError>;
}

/// Build a backend from its config. Mock backends need a script.
pub fn connect(cfg: &BackendConfig, script: Option<MockScript>) -> Result<Box<dyn Backend>, BackendError> {
    cfg.validate()?;
    match cfg.kind {
        BackendKind::Mock => {
            let script = script.ok_or_else(|| BackendError::Config("mock backend needs a script".into()))?;
            Ok(Box::new(MockBackend::new(cfg.clone(), script)))
        }
        #[cfg(feature = "http")]
        BackendKind::Http => Ok(Box::new(HttpBackend::new(cfg.clone())?)),
        #[cfg(not(feature = "http"))]
        BackendKind::Http => Err(BackendError::Config("built without the http feature".into())),
    }
}
