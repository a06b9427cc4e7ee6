use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CacheKey, LlmError, Usage};
use crate::versioned::Versioned;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCaps {
    /// Upper bound on transport dispatches, retries included.
    #[serde(default)]
    pub max_requests: Option<u64>,
    /// Upper bound on prompt + completion tokens over the run.
    #[serde(default)]
    pub max_total_tokens: Option<u64>,
}

/// One provider response that was paid for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub key: CacheKey,
    pub model: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub estimated: bool,
    pub retries: u32,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub dispatches: u64,
    pub responses: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub estimated_responses: u64,
    pub retries: u64,
}

impl LedgerTotals {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Per-run cost accounting. Dispatch slots are reserved atomically, so
/// concurrent callers can never overshoot `max_requests`.
#[derive(Debug)]
pub struct CostLedger {
    caps: CostCaps,
    state: Mutex<LedgerState>,
}

#[derive(Debug, Default)]
struct LedgerState {
    dispatches: u64,
    records: Vec<LedgerRecord>,
    tokens: u64,
    sink: Option<BufWriter<File>>,
}

impl CostLedger {
    pub fn new(caps: CostCaps) -> Self {
        CostLedger { caps, state: Mutex::default() }
    }

    /// Ledger that also appends every record to `path` as JSON Lines.
    pub fn with_log(caps: CostCaps, path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        let ledger = Self::new(caps);
        ledger.state.lock().unwrap().sink = Some(BufWriter::new(file));
        Ok(ledger)
    }

    pub fn caps(&self) -> CostCaps {
        self.caps
    }

    /// Claims one dispatch slot, or fails without side effects.
    pub fn reserve(&self, prompt_tokens: u64) -> Result<(), LlmError> {
        let mut st = self.state.lock().unwrap();
        if let Some(max) = self.caps.max_requests {
            if st.dispatches >= max {
                return Err(LlmError::BudgetExceeded(format!("max_requests={max} reached")));
            }
        }
        if let Some(max) = self.caps.max_total_tokens {
            if st.tokens + prompt_tokens > max {
                return Err(LlmError::BudgetExceeded(format!(
                    "max_total_tokens={max} would be exceeded ({} used, {prompt_tokens} requested)",
                    st.tokens
                )));
            }
        }
        st.dispatches += 1;
        Ok(())
    }

    pub fn record(&self, key: &CacheKey, model: &str, usage: Usage, retries: u32, latency_ms: u64) {
        let rec = LedgerRecord {
            key: key.clone(),
            model: model.to_string(),
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            estimated: usage.estimated,
            retries,
            latency_ms,
        };
        let mut st = self.state.lock().unwrap();
        st.tokens += usage.total();
        if let Some(sink) = st.sink.as_mut() {
            let line = serde_json::to_string(&Versioned::new(&rec)).expect("ledger record serializes");
            if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                log::warn!("could not append to cost ledger: {e}");
            }
        }
        st.records.push(rec);
    }

    pub fn records(&self) -> Vec<LedgerRecord> {
        self.state.lock().unwrap().records.clone()
    }

    pub fn totals(&self) -> LedgerTotals {
        let st = self.state.lock().unwrap();
        let mut t = LedgerTotals { dispatches: st.dispatches, ..LedgerTotals::default() };
        for r in &st.records {
            t.responses += 1;
            t.prompt_tokens += r.prompt_tokens;
            t.completion_tokens += r.completion_tokens;
            t.estimated_responses += u64::from(r.estimated);
            t.retries += u64::from(r.retries);
        }
        t
    }
}
