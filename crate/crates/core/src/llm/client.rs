use std::collections::HashSet;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    cache_key, CacheEntry, CacheKey, ChatRequest, ChatResponse, Clock, ConcurrencyGate, CostLedger, FinishReason,
    LlmError, ProviderConfig, RateLimiter, ResponseCache, Transport, TransportFailure, Usage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClientStats {
    pub requests: u64,
    pub cache_hits: u64,
    pub dispatches: u64,
    pub retries: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub response: ChatResponse,
    pub key: CacheKey,
    pub cache_hit: bool,
    pub retries: u32,
}

pub struct LlmClient {
    provider: ProviderConfig,
    transport: Arc<dyn Transport>,
    cache: Arc<ResponseCache>,
    ledger: Arc<CostLedger>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    gate: ConcurrencyGate,
    api_key: Option<String>,
    inflight: Mutex<HashSet<CacheKey>>,
    inflight_done: Condvar,
    stats: Mutex<ClientStats>,
}

struct Claim<'a> {
    client: &'a LlmClient,
    key: CacheKey,
}

impl Drop for Claim<'_> {
    fn drop(&mut self) {
        self.client.inflight.lock().unwrap().remove(&self.key);
        self.client.inflight_done.notify_all();
    }
}

impl LlmClient {
    /// The API key is read from `provider.api_key_env` when present; use
    /// [`LlmClient::with_api_key`] to supply it directly.
    pub fn new(
        provider: ProviderConfig,
        transport: Arc<dyn Transport>,
        cache: Arc<ResponseCache>,
        ledger: Arc<CostLedger>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, LlmError> {
        provider.validate()?;
        let api_key = std::env::var(&provider.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(LlmClient {
            limiter: RateLimiter::new(provider.requests_per_minute),
            gate: ConcurrencyGate::new(provider.max_concurrency),
            provider,
            transport,
            cache,
            ledger,
            clock,
            api_key,
            inflight: Mutex::default(),
            inflight_done: Condvar::new(),
            stats: Mutex::default(),
        })
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// Fails when the transport needs a key and none is configured.
    pub fn check_credentials(&self) -> Result<(), LlmError> {
        if self.transport.needs_api_key() && self.api_key.is_none() {
            return Err(LlmError::MissingApiKey { var: self.provider.api_key_env.clone() });
        }
        Ok(())
    }

    pub fn provider(&self) -> &ProviderConfig {
        &self.provider
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn limiter(&self) -> &RateLimiter {
        &self.limiter
    }

    pub fn gate(&self) -> &ConcurrencyGate {
        &self.gate
    }

    pub fn stats(&self) -> ClientStats {
        *self.stats.lock().unwrap()
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.complete_detailed(req).map(|c| c.response)
    }

    pub fn complete_detailed(&self, req: &ChatRequest) -> Result<Completion, LlmError> {
        req.validate()?;
        let key = cache_key(req);
        self.stats.lock().unwrap().requests += 1;
        // Identical concurrent requests wait here and then hit the cache.
        let _claim = self.claim(&key);
        if let Some(response) = self.cache.get(&key) {
            self.stats.lock().unwrap().cache_hits += 1;
            return Ok(Completion { response, key, cache_hit: true, retries: 0 });
        }
        self.check_credentials()?;
        let _permit = self.gate.acquire();
        let mut retries = 0u32;
        loop {
            self.ledger.reserve(req.prompt_token_estimate())?;
            self.limiter.acquire(&*self.clock);
            self.stats.lock().unwrap().dispatches += 1;
            let started = self.clock.now();
            let outcome = self.transport.send(&self.provider, self.api_key.as_deref(), req);
            let latency_ms = self.clock.now().saturating_sub(started).as_millis() as u64;
            match outcome {
                Ok(raw) => {
                    let content = raw.content.unwrap_or_default();
                    let usage = raw.usage.unwrap_or_else(|| Usage::estimate(req, &content));
                    let response = ChatResponse { content, finish_reason: raw.finish_reason, usage, latency_ms };
                    self.ledger.record(&key, &req.model, usage, retries, latency_ms);
                    if response.finish_reason != FinishReason::Error {
                        self.cache.insert(CacheEntry {
                            key: key.clone(),
                            response: response.clone(),
                            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                            provider_model: req.model.clone(),
                        })?;
                    }
                    return Ok(Completion { response, key, cache_hit: false, retries });
                }
                Err(TransportFailure::Status { code: code @ (401 | 403), .. }) => {
                    return Err(LlmError::Auth { status: code })
                }
                Err(f) if f.is_retryable() && retries < self.provider.max_retries => {
                    let delay = self.backoff(&key, retries);
                    log::warn!("request {} failed ({f}); retry {} in {:?}", &key.as_str()[..12], retries + 1, delay);
                    self.clock.sleep(delay);
                    retries += 1;
                    self.stats.lock().unwrap().retries += 1;
                }
                Err(TransportFailure::Status { code: 429, .. }) => {
                    return Err(LlmError::RateLimitExhausted { attempts: retries + 1 })
                }
                Err(f) => return Err(LlmError::Transport(f.to_string())),
            }
        }
    }

    /// `backoff_base_ms * 2^attempt` plus up to one base of jitter, seeded
    /// by the request so simulated runs replay exactly.
    fn backoff(&self, key: &CacheKey, attempt: u32) -> Duration {
        let base = self.provider.backoff_base_ms;
        let exp = base.saturating_mul(1u64 << attempt.min(20));
        let jitter = ChaCha8Rng::seed_from_u64(key.seed() ^ u64::from(attempt)).gen_range(0..base);
        Duration::from_millis(exp.saturating_add(jitter))
    }

    fn claim(&self, key: &CacheKey) -> Claim<'_> {
        let mut set = self.inflight.lock().unwrap();
        while set.contains(key) {
            set = self.inflight_done.wait(set).unwrap();
        }
        set.insert(key.clone());
        Claim { client: self, key: key.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CostCaps, MockScript, MockTransport, RawCompletion, SimClock, SystemClock};
    use std::collections::VecDeque;

    /// Replays a fixed sequence of outcomes, then succeeds.
    struct Scripted {
        outcomes: Mutex<VecDeque<Result<RawCompletion, TransportFailure>>>,
        calls: Mutex<u32>,
        delay: Duration,
    }

    impl Scripted {
        fn new(outcomes: Vec<Result<RawCompletion, TransportFailure>>) -> Arc<Self> {
            Arc::new(Scripted { outcomes: Mutex::new(outcomes.into()), calls: Mutex::new(0), delay: Duration::ZERO })
        }
        fn calls(&self) -> u32 {
            *self.calls.lock().unwrap()
        }
    }

    fn ok(text: &str) -> Result<RawCompletion, TransportFailure> {
        Ok(RawCompletion { content: Some(text.into()), finish_reason: FinishReason::Stop, usage: None })
    }

    fn status(code: u16) -> Result<RawCompletion, TransportFailure> {
        Err(TransportFailure::Status { code, body: "x".into() })
    }

    impl Transport for Scripted {
        fn send(&self, _: &ProviderConfig, _: Option<&str>, _: &ChatRequest) -> Result<RawCompletion, TransportFailure> {
            *self.calls.lock().unwrap() += 1;
            std::thread::sleep(self.delay);
            self.outcomes.lock().unwrap().pop_front().unwrap_or_else(|| ok("fine"))
        }
    }

    fn provider() -> ProviderConfig {
        let mut p = ProviderConfig::new("http://unused", "m");
        p.backoff_base_ms = 100;
        p
    }

    fn client(transport: Arc<dyn Transport>, caps: CostCaps, clock: Arc<dyn Clock>) -> LlmClient {
        LlmClient::new(provider(), transport, Arc::new(ResponseCache::in_memory()), Arc::new(CostLedger::new(caps)), clock)
            .unwrap()
            .with_api_key("k")
    }

    fn req(q: &str) -> ChatRequest {
        ChatRequest::single_turn("m", "s", q, 0.0, 32)
    }

    #[test]
    fn retries_through_two_rate_limits() {
        let t = Scripted::new(vec![status(429), status(429), ok("done")]);
        let clock = Arc::new(SimClock::new());
        let c = client(t.clone(), CostCaps::default(), clock.clone());
        let out = c.complete_detailed(&req("a")).unwrap();
        assert_eq!(out.response.content, "done");
        assert_eq!(out.retries, 2);
        assert_eq!(t.calls(), 3);
        assert_eq!(c.ledger().records()[0].retries, 2);
        assert_eq!(c.ledger().totals().dispatches, 3);
        // Backoff waits at least 100 ms and 200 ms, each with under one base of jitter.
        let waited = clock.now();
        assert!(waited >= Duration::from_millis(300) && waited < Duration::from_millis(500), "{waited:?}");
        assert!(out.response.usage.estimated);
    }

    #[test]
    fn rate_limit_exhaustion() {
        let t = Scripted::new((0..10).map(|_| status(429)).collect());
        let c = client(t.clone(), CostCaps::default(), Arc::new(SimClock::new()));
        let err = c.complete(&req("a")).unwrap_err();
        assert!(matches!(err, LlmError::RateLimitExhausted { attempts: 6 }), "{err}");
        assert_eq!(t.calls(), 6);
        assert!(!c.cache().contains(&cache_key(&req("a"))));
    }

    #[test]
    fn auth_is_not_retried() {
        let t = Scripted::new(vec![status(401)]);
        let c = client(t.clone(), CostCaps::default(), Arc::new(SimClock::new()));
        assert!(matches!(c.complete(&req("a")), Err(LlmError::Auth { status: 401 })));
        assert_eq!(t.calls(), 1);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let t = Scripted::new(vec![status(400)]);
        let c = client(t.clone(), CostCaps::default(), Arc::new(SimClock::new()));
        assert!(matches!(c.complete(&req("a")), Err(LlmError::Transport(_))));
        assert_eq!(t.calls(), 1);
    }

    #[test]
    fn ledger_cap_blocks_before_network() {
        let t = Scripted::new(vec![]);
        let c = client(t.clone(), CostCaps { max_requests: Some(0), max_total_tokens: None }, Arc::new(SimClock::new()));
        assert!(matches!(c.complete(&req("a")), Err(LlmError::BudgetExceeded(_))));
        assert_eq!(t.calls(), 0);
    }

    #[test]
    fn second_identical_request_hits_cache() {
        let t = Arc::new(MockTransport::new(MockScript::default()));
        let c = client(t.clone(), CostCaps::default(), Arc::new(SimClock::new()));
        let first = c.complete_detailed(&req("a")).unwrap();
        let second = c.complete_detailed(&req("a")).unwrap();
        assert!(!first.cache_hit && second.cache_hit);
        assert_eq!(first.response, second.response);
        assert_eq!(t.call_count(), 1);
        assert_eq!(c.stats().cache_hits, 1);
    }

    #[test]
    fn missing_key_for_live_transport() {
        let mut p = provider();
        p.api_key_env = "EAE_TEST_SURELY_UNSET_VARIABLE".into();
        let t = Scripted::new(vec![]);
        let c = LlmClient::new(
            p,
            t.clone(),
            Arc::new(ResponseCache::in_memory()),
            Arc::new(CostLedger::new(CostCaps::default())),
            Arc::new(SimClock::new()),
        )
        .unwrap();
        assert!(matches!(c.complete(&req("a")), Err(LlmError::MissingApiKey { .. })));
        assert_eq!(t.calls(), 0);
    }

    #[test]
    fn error_finishes_are_not_cached() {
        let t = Scripted::new(vec![Ok(RawCompletion { content: None, finish_reason: FinishReason::Error, usage: None })]);
        let c = client(t.clone(), CostCaps::default(), Arc::new(SimClock::new()));
        assert_eq!(c.complete(&req("a")).unwrap().finish_reason, FinishReason::Error);
        assert_eq!(c.complete(&req("a")).unwrap().content, "fine");
        assert_eq!(t.calls(), 2);
    }

    #[test]
    fn concurrent_duplicates_send_once_and_respect_gate() {
        let t = Arc::new(Scripted {
            outcomes: Mutex::default(),
            calls: Mutex::new(0),
            delay: Duration::from_millis(5),
        });
        let c = client(t.clone(), CostCaps::default(), Arc::new(SystemClock::new()));
        let mut p = provider();
        p.max_concurrency = 2;
        p.requests_per_minute = 10_000;
        let c = LlmClient { gate: ConcurrencyGate::new(2), limiter: RateLimiter::new(10_000), provider: p, ..c };
        std::thread::scope(|s| {
            for i in 0..24 {
                let c = &c;
                s.spawn(move || c.complete(&req(&format!("q{}", i % 6))).unwrap());
            }
        });
        assert_eq!(t.calls(), 6);
        assert!(c.gate().peak() <= 2);
        assert_eq!(c.stats().cache_hits, 18);
    }
}
