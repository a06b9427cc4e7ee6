use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{cache_key, CacheKey, ChatRequest, ChatResponse, FinishReason, LlmError, ProviderConfig, Usage};

pub const DEFAULT_MOCK_RESPONSE: &str = "Final Answers:\n(none)";

/// What a transport hands back for one successful exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCompletion {
    pub content: Option<String>,
    pub finish_reason: FinishReason,
    /// `None` when the provider sent no usage object.
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Status { code: u16, body: String },
    Timeout,
    Connection(String),
    Malformed(String),
}

impl TransportFailure {
    /// 429, 5xx, timeouts and connection failures are worth another try.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportFailure::Status { code, .. } => *code == 429 || (500..600).contains(code),
            TransportFailure::Timeout | TransportFailure::Connection(_) => true,
            TransportFailure::Malformed(_) => false,
        }
    }
}

impl std::fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportFailure::Status { code, body } => {
                let snippet: String = body.chars().take(200).collect();
                write!(f, "HTTP {code}: {snippet}")
            }
            TransportFailure::Timeout => f.write_str("request timed out"),
            TransportFailure::Connection(e) => write!(f, "connection failed: {e}"),
            TransportFailure::Malformed(e) => write!(f, "malformed response: {e}"),
        }
    }
}

pub trait Transport: Send + Sync {
    fn send(
        &self,
        provider: &ProviderConfig,
        api_key: Option<&str>,
        req: &ChatRequest,
    ) -> Result<RawCompletion, TransportFailure>;

    fn needs_api_key(&self) -> bool {
        true
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions`.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        HttpTransport { agent: config.into() }
    }

    pub fn for_provider(provider: &ProviderConfig) -> Self {
        Self::new(Duration::from_secs(provider.timeout_secs))
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: Option<WireMessage>,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

pub(crate) fn parse_wire_response(body: &str) -> Result<RawCompletion, TransportFailure> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| TransportFailure::Malformed(e.to_string()))?;
    let choice = wire.choices.into_iter().next().ok_or_else(|| TransportFailure::Malformed("no choices".into()))?;
    let content = choice.message.and_then(|m| m.content);
    let mut finish_reason = FinishReason::from_provider(choice.finish_reason.as_deref());
    if content.is_none() {
        finish_reason = FinishReason::Error;
    }
    Ok(RawCompletion {
        content,
        finish_reason,
        usage: wire.usage.map(|u| Usage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
            estimated: false,
        }),
    })
}

impl Transport for HttpTransport {
    fn send(
        &self,
        provider: &ProviderConfig,
        api_key: Option<&str>,
        req: &ChatRequest,
    ) -> Result<RawCompletion, TransportFailure> {
        let url = format!("{}/chat/completions", provider.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_completion_tokens,
        });
        let mut request = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request.send(body.to_string()).map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportFailure::Timeout,
            ureq::Error::Io(_) | ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => {
                TransportFailure::Connection(e.to_string())
            }
            other => TransportFailure::Malformed(other.to_string()),
        })?;
        let code = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportFailure::Timeout,
            other => TransportFailure::Connection(other.to_string()),
        })?;
        if !(200..300).contains(&code) {
            return Err(TransportFailure::Status { code, body: text });
        }
        parse_wire_response(&text)
    }
}

/// Canned replies keyed by request digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default = "default_mock_text")]
    pub default: String,
    #[serde(default)]
    pub responses: BTreeMap<String, String>,
}

fn default_mock_text() -> String {
    DEFAULT_MOCK_RESPONSE.to_string()
}

impl Default for MockScript {
    fn default() -> Self {
        MockScript { default: default_mock_text(), responses: BTreeMap::new() }
    }
}

impl MockScript {
    pub fn from_json(json: &str) -> Result<Self, LlmError> {
        let script: MockScript =
            serde_json::from_str(json).map_err(|e| LlmError::Config(format!("mock script: {e}")))?;
        if let Some(bad) = script.responses.keys().find(|k| CacheKey::parse(k).is_none()) {
            return Err(LlmError::Config(format!("mock script key {bad:?} is not a request digest")));
        }
        Ok(script)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    pub fn insert(&mut self, key: &CacheKey, text: impl Into<String>) {
        self.responses.insert(key.as_str().to_string(), text.into());
    }

    pub fn lookup(&self, key: &CacheKey) -> &str {
        self.responses.get(key.as_str()).map_or(self.default.as_str(), String::as_str)
    }
}

/// Scripted reply for `req`, with estimated usage and zero latency.
pub fn mock_complete(req: &ChatRequest, script: &MockScript) -> ChatResponse {
    let content = script.lookup(&cache_key(req)).to_string();
    ChatResponse {
        usage: Usage::estimate(req, &content),
        content,
        finish_reason: FinishReason::Stop,
        latency_ms: 0,
    }
}

/// Transport backed by a [`MockScript`]; records every request key it sees.
#[derive(Debug, Default)]
pub struct MockTransport {
    script: MockScript,
    calls: Mutex<Vec<CacheKey>>,
}

impl MockTransport {
    pub fn new(script: MockScript) -> Self {
        MockTransport { script, calls: Mutex::default() }
    }

    pub fn calls(&self) -> Vec<CacheKey> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }
}

impl Transport for MockTransport {
    fn send(&self, _: &ProviderConfig, _: Option<&str>, req: &ChatRequest) -> Result<RawCompletion, TransportFailure> {
        self.calls.lock().unwrap().push(cache_key(req));
        let resp = mock_complete(req, &self.script);
        Ok(RawCompletion { content: Some(resp.content), finish_reason: resp.finish_reason, usage: Some(resp.usage) })
    }

    fn needs_api_key(&self) -> bool {
        false
    }
}
