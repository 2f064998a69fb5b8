//! Uniform access to chat-completions backends.
//!
//! A [`Backend`] performs one wire call. [`Client`] wraps a backend with
//! image resolution, content-addressed caching, retry with backoff, and the
//! bounded-parallelism batch executor.

mod batch;
mod cache;
mod client;
mod http;
mod retry;
mod stub;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use batch::run_bounded;
pub use cache::{cache_key, CachedResponse, ResponseCache};
pub use client::{Client, ImageResolver, Sleeper};
pub use http::{chat_completions_body, parse_chat_response, HttpBackend};
pub use retry::{AttemptLog, RetryPolicy};
pub use stub::{SequenceScope, StubBackend, StubCall, StubReply, StubRule, StubScript};

use crate::datastore::ImageBytes;

/// Sampling parameters sent with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            temperature: 1.0,
            top_p: 0.9,
            max_tokens: 2048,
            seed: None,
        }
    }
}

impl GenParams {
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("temperature {} must be >= 0", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p {} must be in (0, 1]", self.top_p));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be > 0".into());
        }
        Ok(())
    }

    /// Sampled calls without a seed are not reproducible and skip cache lookups.
    pub fn is_cacheable(&self) -> bool {
        self.temperature == 0.0 || self.seed.is_some()
    }
}

/// Stable per-call seed from a run seed and a unit label.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    // Keep it within i64 so JSON consumers that parse signed integers agree.
    u64::from_le_bytes(d[..8].try_into().unwrap()) >> 1
}

/// Identity of a configured backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendId {
    pub name: String,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
}

impl BackendId {
    pub fn new(name: &str, endpoint: &str, model: &str) -> Self {
        BackendId {
            name: name.into(),
            endpoint: endpoint.into(),
            model: model.into(),
            auth_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let url = reqwest::Url::parse(&self.endpoint)
            .map_err(|e| format!("backend {}: endpoint '{}': {e}", self.name, self.endpoint))?;
        if url.cannot_be_a_base() {
            return Err(format!("backend {}: endpoint must be an absolute URL", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, other: Usage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub usage: Usage,
    pub latency: Duration,
    pub cache_hit: bool,
    /// Wire attempts made for this result; zero on a cache hit.
    pub attempts: u32,
}

/// One fully resolved request, as a backend sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub system_text: Option<String>,
    pub user_text: String,
    pub images: Vec<ImageBytes>,
    pub params: GenParams,
}

/// What a successful wire call returns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCompletion {
    pub text: String,
    pub usage: Usage,
}

/// Failure of a single wire call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallError {
    pub transient: bool,
    pub status: Option<u16>,
    pub message: String,
}

impl CallError {
    pub fn transient(status: Option<u16>, message: impl Into<String>) -> Self {
        CallError {
            transient: true,
            status,
            message: message.into(),
        }
    }

    pub fn permanent(status: Option<u16>, message: impl Into<String>) -> Self {
        CallError {
            transient: false,
            status,
            message: message.into(),
        }
    }

    /// 408, 429 and 5xx are worth retrying.
    pub fn from_status(status: u16, body: &str) -> Self {
        let excerpt: String = body.chars().take(500).collect();
        if status == 408 || status == 429 || status >= 500 {
            CallError::transient(Some(status), excerpt)
        } else {
            CallError::permanent(Some(status), excerpt)
        }
    }
}

pub trait Backend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<RawCompletion, CallError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("request failed permanently: {0}")]
    Failed(String),
    #[error("retries exhausted after {} attempts: {}", attempts.len(), attempts.last().map(|a| a.message.as_str()).unwrap_or(""))]
    Exhausted { attempts: Vec<AttemptLog> },
    #[error("credentials: {0}")]
    Credentials(String),
    #[error("image: {0}")]
    Image(String),
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_generation_settings() {
        let p = GenParams::default();
        assert_eq!((p.temperature, p.top_p, p.max_tokens), (1.0, 0.9, 2048));
        assert!(p.validate().is_ok());
        assert!(!p.is_cacheable());
        assert!(p.with_seed(Some(1)).is_cacheable());
    }

    #[test]
    fn param_bounds() {
        let mut p = GenParams::default();
        p.top_p = 0.0;
        assert!(p.validate().is_err());
        p.top_p = 1.0;
        p.temperature = -0.1;
        assert!(p.validate().is_err());
    }

    #[test]
    fn status_classification() {
        assert!(CallError::from_status(429, "").transient);
        assert!(CallError::from_status(503, "").transient);
        assert!(!CallError::from_status(400, "bad").transient);
        assert_eq!(CallError::from_status(401, &"x".repeat(900)).message.len(), 500);
    }

    #[test]
    fn endpoint_must_be_absolute() {
        assert!(BackendId::new("a", "http://localhost:8000/v1", "m").validate().is_ok());
        assert!(BackendId::new("a", "/v1/chat", "m").validate().is_err());
    }
}
