//! Chat-completion dispatch with caching, retries, rate limiting and cost caps.
//!
//! [`LlmClient::complete`] is the entry point. Everything it touches is
//! injectable: the [`Transport`] (HTTP or scripted mock), the [`Clock`]
//! (wall or simulated) and the [`ResponseCache`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod cache;
mod client;
mod clock;
mod ledger;
mod limit;
mod transport;

pub use cache::{CacheEntry, CacheStats, ResponseCache, ENTRIES_FILE, INDEX_FILE};
pub use client::{ClientStats, Completion, LlmClient};
pub use clock::{Clock, SimClock, SystemClock};
pub use ledger::{CostCaps, CostLedger, LedgerRecord, LedgerTotals};
pub use limit::{ConcurrencyGate, GatePermit, RateLimiter, WINDOW};
pub use transport::{
    mock_complete, HttpTransport, MockScript, MockTransport, RawCompletion, Transport, TransportFailure,
    DEFAULT_MOCK_RESPONSE,
};

use crate::prompt::count_tokens;
use crate::sha256_hex;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("provider rejected credentials (HTTP {status})")]
    Auth { status: u16 },
    #[error("API key variable {var} is not set")]
    MissingApiKey { var: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimitExhausted { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cost cap reached: {0}")]
    BudgetExceeded(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("cache error: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
}

impl fmt::Display for MessageRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageRole::System => "system",
            MessageRole::User => "user",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: MessageRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: MessageRole::User, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_completion_tokens: u32,
}

impl ChatRequest {
    /// System + user request, the only shape the harness sends.
    pub fn single_turn(
        model: impl Into<String>,
        system: impl Into<String>,
        user: impl Into<String>,
        temperature: f64,
        max_completion_tokens: u32,
    ) -> Self {
        ChatRequest {
            model: model.into(),
            messages: vec![Message::system(system), Message::user(user)],
            temperature,
            max_completion_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.last() {
            None => return Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role != MessageRole::User => {
                return Err(LlmError::InvalidRequest("last message must come from the user".into()))
            }
            _ => {}
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest(format!("temperature {} out of range", self.temperature)));
        }
        if self.max_completion_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_completion_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Token estimate of all message contents.
    pub fn prompt_token_estimate(&self) -> u64 {
        self.messages.iter().map(|m| count_tokens(&m.content) as u64).sum()
    }
}

/// Hex SHA-256 of a canonicalized [`ChatRequest`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Accepts a 64-digit lowercase hex string.
    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))).then(|| CacheKey(s.to_string()))
    }

    pub(crate) fn seed(&self) -> u64 {
        u64::from_str_radix(&self.0[..16], 16).unwrap_or(0)
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn cache_key(req: &ChatRequest) -> CacheKey {
    #[derive(Serialize)]
    struct Canonical<'a> {
        v: u32,
        model: &'a str,
        messages: &'a [Message],
        temperature: f64,
        max_completion_tokens: u32,
    }
    // -0.0 and 0.0 are the same setting.
    let temperature = if req.temperature == 0.0 { 0.0 } else { req.temperature };
    let canonical = Canonical {
        v: 1,
        model: &req.model,
        messages: &req.messages,
        temperature,
        max_completion_tokens: req.max_completion_tokens,
    };
    let json = serde_json::to_string(&canonical).expect("request serializes");
    CacheKey(sha256_hex(json.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

impl FinishReason {
    /// Maps a provider string; anything unrecognised is an error finish.
    pub fn from_provider(s: Option<&str>) -> Self {
        match s {
            Some("stop") | None => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            Some(_) => FinishReason::Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// True when the numbers come from `count_tokens` rather than the provider.
    #[serde(default)]
    pub estimated: bool,
}

impl Usage {
    pub fn estimate(req: &ChatRequest, content: &str) -> Self {
        Usage {
            prompt_tokens: req.prompt_token_estimate(),
            completion_tokens: count_tokens(content) as u64,
            estimated: true,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency_ms: u64,
}

fn default_api_key_env() -> String {
    "EAE_API_KEY".into()
}
fn default_max_retries() -> u32 {
    5
}
fn default_backoff_base_ms() -> u64 {
    500
}
fn default_max_concurrency() -> usize {
    4
}
fn default_rpm() -> u32 {
    60
}
fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_base_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        ProviderConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_api_key_env(),
            max_retries: default_max_retries(),
            backoff_base_ms: default_backoff_base_ms(),
            max_concurrency: default_max_concurrency(),
            requests_per_minute: default_rpm(),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::Config(m.into()));
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be at least 1");
        }
        if self.requests_per_minute == 0 {
            return bad("requests_per_minute must be positive");
        }
        if self.backoff_base_ms == 0 {
            return bad("backoff_base_ms must be positive");
        }
        if self.model.is_empty() {
            return bad("model is empty");
        }
        Ok(())
    }
}
