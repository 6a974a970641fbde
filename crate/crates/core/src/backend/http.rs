//! Client for completion endpoints that report per-token top-k logprobs.
//!
//! Request: `POST {base_url}/v1/completions` with
//! `{"model", "prompt", "max_tokens", "temperature": 0, "logprobs", "echo": false}`.
//! Response: `choices[0].logprobs.top_logprobs`, one `token → logprob` map
//! per generated position.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendConfig, BackendError, RetryPolicy, API_KEY_ENV};
use crate::types::{GenerationTrace, RenderedPrompt, TokenCandidate};

#[derive(Debug, Serialize)]
pub struct CompletionRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub max_tokens: usize,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<usize>,
    pub echo: bool,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Debug, Deserialize)]
struct ChoiceLogprobs {
    top_logprobs: Vec<Option<BTreeMap<String, f64>>>,
}

pub struct HttpBackend {
    cfg: BackendConfig,
    url: String,
    agent: ureq::Agent,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpBackend {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let base = cfg
            .base_url
            .as_deref()
            .ok_or_else(|| BackendError::Config("http backend needs base_url".into()))?;
        let url = format!("{}/v1/completions", base.trim_end_matches('/'));
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout()))
            .http_status_as_error(false)
            .build()
            .new_agent();
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self {
            cfg,
            url,
            agent,
            api_key,
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn post_once(&self, body: &str, attempt: u32) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let transport = |e: ureq::Error| BackendError::Transport {
            attempts: attempt,
            message: e.to_string(),
        };
        let mut resp = req.send(body).map_err(transport)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(transport)?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(BackendError::Status {
                status,
                attempts: attempt,
                body: text.chars().take(512).collect(),
            })
        }
    }

    /// POST with retries on transport errors and 5xx.
    fn post(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let body = serde_json::to_string(request).map_err(|e| BackendError::Config(e.to_string()))?;
        let mut attempt = 1;
        loop {
            match self.post_once(&body, attempt) {
                Err(e) if e.is_retryable() && attempt < self.retry.attempts => {
                    log::warn!("request to {} failed (attempt {attempt}): {e}", self.url);
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Parse a completion response body into a trace.
pub fn parse_trace(body: &str, top_k: usize, n_positions: usize) -> Result<GenerationTrace, BackendError> {
    let resp: CompletionResponse = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
    let top = choice
        .logprobs
        .ok_or_else(|| BackendError::Malformed("choice has no logprobs".into()))?
        .top_logprobs;
    if top.is_empty() {
        return Err(BackendError::Malformed("top_logprobs is empty".into()));
    }
    if top.len() < n_positions {
        log::warn!("backend returned {} of {n_positions} requested positions", top.len());
    }
    let mut positions = Vec::with_capacity(n_positions);
    for (p, entry) in top.into_iter().take(n_positions).enumerate() {
        let map = entry
            .filter(|m| !m.is_empty())
            .ok_or_else(|| BackendError::Malformed(format!("position {p} has no logprobs")))?;
        if map.len() < top_k {
            log::warn!(
                "position {p}: backend returned {} of {top_k} requested logprobs",
                map.len()
            );
        }
        let mut cands = map
            .into_iter()
            .map(|(tok, lp)| TokenCandidate::new(tok, lp))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        crate::types::sort_candidates(&mut cands);
        cands.truncate(top_k);
        positions.push(cands);
    }
    GenerationTrace::from_positions(positions, top_k).map_err(|e| BackendError::Malformed(e.to_string()))
}

/// Text of the first choice of a completion response.
pub fn parse_text(body: &str) -> Result<String, BackendError> {
    let resp: CompletionResponse = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    resp.choices
        .into_iter()
        .next()
        .and_then(|c| c.text)
        .ok_or_else(|| BackendError::Malformed("response has no choice text".into()))
}

impl Backend for HttpBackend {
    fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    fn complete(&self, prompt: &RenderedPrompt) -> Result<GenerationTrace, BackendError> {
        if prompt.text().is_empty() {
            return Err(BackendError::Config("empty prompt".into()));
        }
        let req = CompletionRequest {
            model: &self.cfg.model_name,
            prompt: prompt.text(),
            max_tokens: self.cfg.n_positions,
            temperature: 0.0,
            logprobs: Some(self.cfg.top_k),
            echo: false,
        };
        let body = self.post(&req)?;
        parse_trace(&body, self.cfg.top_k, self.cfg.n_positions)
    }

    fn generate(&self, prompt: &str, max_tokens: usize) -> Result<String, BackendError> {
        let req = CompletionRequest {
            model: &self.cfg.model_name,
            prompt,
            max_tokens,
            temperature: 0.0,
            logprobs: None,
            echo: false,
        };
        let body = self.post(&req)?;
        parse_text(&body)
    }
}
