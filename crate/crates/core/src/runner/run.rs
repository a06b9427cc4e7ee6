use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{render_report, ExperimentConfig, ReportFormat, RunnerError};
use crate::corpus::{load_docee, load_rams, sample_subset, write_dump, Dataset, Document, LoadMode, DUMP_FILE_NAME};
use crate::extract::{
    canonicalize_roles, dedupe_predictions, parse_response, ExtractionRecord, ParseDiagnostics, ParseMode,
    RecordStatus,
};
use crate::llm::{
    cache_key, CacheKey, ChatRequest, ClientStats, Clock, CostLedger, FinishReason, HttpTransport, LedgerTotals,
    LlmClient, LlmError, MockScript, MockTransport, ResponseCache, SystemClock, Transport,
};
use crate::prompt::{builtin_exemplars, load_exemplars, select_exemplar, Ontology, PromptBuilder, PromptBundle, TemplateSet};
use crate::score::{score_corpus, ReportLabels, ScoreReport};
use crate::versioned::Versioned;
use crate::SCHEMA_VERSION;

pub const CONFIG_FILE: &str = "config.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_MD_FILE: &str = "report.md";
pub const PROMPTS_DIR: &str = "prompts";

/// Injection points for tests and simulations.
pub struct RunEnv {
    /// Overrides the transport the config would select.
    pub transport: Option<Arc<dyn Transport>>,
    pub clock: Arc<dyn Clock>,
}

impl Default for RunEnv {
    fn default() -> Self {
        RunEnv { transport: None, clock: Arc::new(SystemClock::new()) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentStatus {
    pub doc_id: String,
    pub status: RecordStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub config_digest: String,
    pub started_at: String,
    pub finished_at: String,
    pub dataset: String,
    pub strategy: String,
    pub model: String,
    pub n_sampled: usize,
    /// Worst status over each document's events.
    pub documents: Vec<DocumentStatus>,
    pub status_counts: BTreeMap<RecordStatus, usize>,
    /// Records reused from an earlier invocation.
    pub resumed_records: usize,
    /// Spend of this invocation.
    pub ledger: LedgerTotals,
    pub client: ClientStats,
    pub report: ScoreReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlannedRequest {
    pub doc_id: String,
    pub event_index: usize,
    pub event_type: String,
    pub key: CacheKey,
    pub prompt_tokens: usize,
    pub trims: usize,
}

struct WorkItem {
    doc_id: String,
    event_index: usize,
    event_type: String,
    trigger: Option<String>,
    bundle: PromptBundle,
    request: ChatRequest,
    role_names: Vec<String>,
}

struct Prepared {
    label: &'static str,
    docs: Vec<Document>,
    items: Vec<WorkItem>,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared, RunnerError> {
    config.validate()?;
    let mode = if config.dataset.lenient { LoadMode::Lenient } else { LoadMode::Strict };
    let corpus = match config.dataset.name {
        Dataset::Rams => load_rams(&config.dataset.path, mode)?,
        Dataset::DocEe => load_docee(&config.dataset.path, config.setting().unwrap_or_default(), mode)?,
    };
    if corpus.skipped_records > 0 {
        log::warn!("skipped {} malformed records in {}", corpus.skipped_records, config.dataset.path.display());
    }
    let docs = sample_subset(&corpus.documents, config.sampling.n, config.sampling.seed)?;

    let templates = match &config.prompt.template_dir {
        Some(dir) => TemplateSet::from_dir(dir)?,
        None => TemplateSet::builtin(&config.prompt.template_version)?,
    };
    let ontology = match &config.prompt.ontology_path {
        Some(p) => Ontology::from_path(p)?,
        None => Ontology::builtin(),
    };
    let builder = PromptBuilder::new(templates, ontology);
    let pool = match &config.prompt.exemplar_path {
        Some(p) => load_exemplars(p)?,
        None => builtin_exemplars(config.dataset.name),
    };
    let provider = config.effective_provider();
    let cross_domain = corpus.is_cross_domain();

    let mut items = Vec::new();
    for doc in &docs {
        for (event_index, event) in doc.events.iter().enumerate() {
            let exemplar = match config.prompt.examples() {
                0 => None,
                _ => Some(select_exemplar(&pool, &event.event_type, cross_domain)?),
            };
            let bundle = builder.assemble_prompt(doc, event, config.prompt.strategy, exemplar, &config.prompt.token_budget)?;
            let request = ChatRequest::single_turn(
                provider.model.clone(),
                bundle.system_text.clone(),
                bundle.user_text.clone(),
                config.generation.temperature,
                config.max_completion_tokens(),
            );
            items.push(WorkItem {
                doc_id: doc.doc_id.clone(),
                event_index,
                event_type: event.event_type.clone(),
                trigger: doc.trigger_text(event),
                bundle,
                request,
                role_names: builder.ontology().role_names(&event.event_type),
            });
        }
    }
    Ok(Prepared { label: corpus.label(), docs, items })
}

/// The requests a run would send, without sending anything. Useful for
/// writing mock scripts, whose keys are request digests.
pub fn plan_requests(config: &ExperimentConfig) -> Result<Vec<PlannedRequest>, RunnerError> {
    Ok(prepare(config)?
        .items
        .into_iter()
        .map(|it| PlannedRequest {
            key: cache_key(&it.request),
            doc_id: it.doc_id,
            event_index: it.event_index,
            event_type: it.event_type,
            prompt_tokens: it.bundle.token_estimate,
            trims: it.bundle.trims.len(),
        })
        .collect())
}

pub fn write_predictions<W: Write>(records: &[ExtractionRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &Versioned::new(r))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn parse_record_line(path: &Path, line_no: usize, line: &str) -> Result<ExtractionRecord, RunnerError> {
    let err = |reason: String| RunnerError::Record { path: path.to_path_buf(), line: line_no, reason };
    let v: Versioned<ExtractionRecord> = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
    if v.schema != SCHEMA_VERSION {
        return Err(err(format!("unsupported schema {}", v.schema)));
    }
    Ok(v.inner)
}

/// Reads a prediction dump. Blank lines are ignored.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<ExtractionRecord>, RunnerError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_record_line(path, i + 1, l))
        .collect()
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<RunManifest, RunnerError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| RunnerError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| RunnerError::Record { path: path.to_path_buf(), line: 1, reason: e.to_string() })
}

/// Records from an interrupted run. Unreadable lines (a torn final write)
/// are dropped with a warning; later lines win.
fn read_resumable(path: &Path) -> Result<HashMap<(String, usize), ExtractionRecord>, RunnerError> {
    let mut out = HashMap::new();
    if !path.exists() {
        return Ok(out);
    }
    let file = File::open(path).map_err(|e| RunnerError::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RunnerError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record_line(path, i + 1, &line) {
            Ok(r) => {
                out.insert((r.doc_id.clone(), r.event_index), r);
            }
            Err(e) => log::warn!("ignoring {e}"),
        }
    }
    Ok(out)
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| RunnerError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| RunnerError::io(path, e))
}

fn check_or_write_config(config: &ExperimentConfig, dir: &Path) -> Result<(), RunnerError> {
    #[derive(Serialize, Deserialize)]
    struct Stored {
        schema: u32,
        digest: String,
        config: serde_json::Value,
    }
    let path = dir.join(CONFIG_FILE);
    let digest = config.digest();
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| RunnerError::io(&path, e))?;
        let stored: Stored = serde_json::from_str(&text)
            .map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        if stored.digest != digest {
            return Err(RunnerError::Config(format!(
                "{} belongs to a run with a different config (digest {} vs {digest}); use a fresh output_dir",
                dir.display(),
                stored.digest
            )));
        }
        return Ok(());
    }
    let stored = Stored {
        schema: SCHEMA_VERSION,
        digest,
        config: serde_json::to_value(config).expect("config serializes"),
    };
    write_atomic(&path, &serde_json::to_vec_pretty(&stored).expect("config serializes"))
}

fn prompt_file_name(item: &WorkItem) -> String {
    let safe: String = item
        .doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}__e{}.txt", item.event_index)
}

fn build_client(config: &ExperimentConfig, env: &RunEnv, out_dir: &Path) -> Result<LlmClient, RunnerError> {
    let provider = config.effective_provider();
    let transport: Arc<dyn Transport> = match (&env.transport, &config.mock, &config.provider) {
        (Some(t), _, _) => t.clone(),
        (None, Some(mock), _) => {
            let script = match &mock.script {
                Some(p) => MockScript::from_path(p)?,
                None => MockScript::default(),
            };
            Arc::new(MockTransport::new(script))
        }
        (None, None, Some(p)) => Arc::new(HttpTransport::for_provider(p)),
        (None, None, None) => unreachable!("validated config has a provider"),
    };
    let cache = if config.cache.enabled {
        ResponseCache::open(&config.cache.dir)?
    } else {
        ResponseCache::in_memory()
    };
    let ledger = CostLedger::with_log(config.cost_caps, out_dir.join(LEDGER_FILE))?;
    let client = LlmClient::new(provider, transport, Arc::new(cache), Arc::new(ledger), env.clock.clone())?;
    client.check_credentials()?;
    Ok(client)
}

fn is_fatal(e: &LlmError) -> bool {
    matches!(
        e,
        LlmError::BudgetExceeded(_)
            | LlmError::Auth { .. }
            | LlmError::MissingApiKey { .. }
            | LlmError::Config(_)
            | LlmError::InvalidRequest(_)
            | LlmError::Cache(_)
    )
}

fn extract_one(client: &LlmClient, item: &WorkItem) -> Result<ExtractionRecord, LlmError> {
    let record = |raw: String, predictions, diagnostics, status| ExtractionRecord {
        doc_id: item.doc_id.clone(),
        event_index: item.event_index,
        event_type: item.event_type.clone(),
        trigger: item.trigger.clone(),
        raw_response: raw,
        predictions,
        diagnostics,
        status,
    };
    let failed = |warning: String| ParseDiagnostics { mode_used: ParseMode::Empty, skipped_lines: 0, warnings: vec![warning] };
    match client.complete(&item.request) {
        Ok(resp) if resp.finish_reason == FinishReason::Error => Ok(record(
            resp.content,
            Vec::new(),
            failed("provider finished with an error".into()),
            RecordStatus::ProviderError,
        )),
        Ok(resp) => {
            let (mut preds, diagnostics) = parse_response(&resp.content);
            canonicalize_roles(&mut preds, &item.role_names);
            let preds = dedupe_predictions(preds);
            let status = if diagnostics.mode_used == ParseMode::Empty { RecordStatus::ParseEmpty } else { RecordStatus::Ok };
            Ok(record(resp.content, preds, diagnostics, status))
        }
        Err(e) if is_fatal(&e) => Err(e),
        Err(e) => {
            log::warn!("{} event {}: {e}", item.doc_id, item.event_index);
            Ok(record(String::new(), Vec::new(), failed(e.to_string()), RecordStatus::ProviderError))
        }
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest, RunnerError> {
    run_experiment_with(config, RunEnv::default())
}

/// Samples, prompts, dispatches, parses and scores. Records already in
/// `predictions.jsonl` (other than provider errors) are reused.
pub fn run_experiment_with(config: &ExperimentConfig, env: RunEnv) -> Result<RunManifest, RunnerError> {
    let started_at = now_rfc3339();
    let prepared = prepare(config)?;
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| RunnerError::io(out_dir, e))?;
    check_or_write_config(config, out_dir)?;

    let mut gold = Vec::new();
    write_dump(&prepared.docs, &mut gold).map_err(|e| RunnerError::io(out_dir.join(DUMP_FILE_NAME), e))?;
    write_atomic(&out_dir.join(DUMP_FILE_NAME), &gold)?;

    let predictions_path = out_dir.join(PREDICTIONS_FILE);
    let mut done = read_resumable(&predictions_path)?;
    done.retain(|_, r| r.status != RecordStatus::ProviderError);
    let resumed_records = prepared
        .items
        .iter()
        .filter(|it| done.contains_key(&(it.doc_id.clone(), it.event_index)))
        .count();
    let pending: Vec<&WorkItem> = prepared
        .items
        .iter()
        .filter(|it| !done.contains_key(&(it.doc_id.clone(), it.event_index)))
        .collect();
    log::info!("{} queries, {} reused, {} to send", prepared.items.len(), resumed_records, pending.len());

    if config.save_prompts {
        let dir = out_dir.join(PROMPTS_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| RunnerError::io(&dir, e))?;
        for item in &prepared.items {
            let text = format!("=== system ===\n{}\n=== user ===\n{}\n", item.bundle.system_text, item.bundle.user_text);
            let path = dir.join(prompt_file_name(item));
            std::fs::write(&path, text).map_err(|e| RunnerError::io(&path, e))?;
        }
    }

    let client = build_client(config, &env, out_dir)?;
    let appender = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&predictions_path)
        .map_err(|e| RunnerError::io(&predictions_path, e))?;
    let appender = Mutex::new(BufWriter::new(appender));
    let fresh: Mutex<Vec<ExtractionRecord>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<RunnerError>> = Mutex::new(None);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = client.provider().max_concurrency.min(pending.len()).max(1);

    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = pending.get(i) else { break };
                match extract_one(&client, item) {
                    Ok(rec) => {
                        let mut w = appender.lock().unwrap();
                        if let Err(e) = write_predictions(std::slice::from_ref(&rec), &mut *w) {
                            *failure.lock().unwrap() = Some(RunnerError::io(&predictions_path, e));
                            stop.store(true, Ordering::SeqCst);
                        }
                        fresh.lock().unwrap().push(rec);
                    }
                    Err(e) => {
                        stop.store(true, Ordering::SeqCst);
                        failure.lock().unwrap().get_or_insert(RunnerError::Llm(e));
                    }
                }
            });
        }
    });
    drop(appender);

    for r in fresh.into_inner().unwrap() {
        done.insert((r.doc_id.clone(), r.event_index), r);
    }
    // Rewrite in sample order so the file is deterministic.
    let records: Vec<ExtractionRecord> = prepared
        .items
        .iter()
        .filter_map(|it| done.get(&(it.doc_id.clone(), it.event_index)).cloned())
        .collect();
    let mut buf = Vec::new();
    write_predictions(&records, &mut buf).map_err(|e| RunnerError::io(&predictions_path, e))?;
    write_atomic(&predictions_path, &buf)?;

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }

    let provider = client.provider();
    let labels = ReportLabels {
        dataset: prepared.label.to_string(),
        strategy: config.prompt.strategy.to_string(),
        model: provider.model.clone(),
    };
    let report = score_corpus(&records, &prepared.docs, config.match_mode, &labels)?;

    let mut worst: HashMap<&str, RecordStatus> = HashMap::new();
    for r in &records {
        let s = worst.entry(r.doc_id.as_str()).or_insert(RecordStatus::Ok);
        *s = (*s).max(r.status);
    }
    let documents: Vec<DocumentStatus> = prepared
        .docs
        .iter()
        .map(|d| DocumentStatus {
            doc_id: d.doc_id.clone(),
            status: worst.get(d.doc_id.as_str()).copied().unwrap_or(RecordStatus::Ok),
        })
        .collect();
    let mut status_counts = BTreeMap::new();
    for d in &documents {
        *status_counts.entry(d.status).or_insert(0) += 1;
    }

    let manifest = RunManifest {
        schema: SCHEMA_VERSION,
        config_digest: config.digest(),
        started_at,
        finished_at: now_rfc3339(),
        dataset: labels.dataset.clone(),
        strategy: labels.strategy.clone(),
        model: labels.model.clone(),
        n_sampled: prepared.docs.len(),
        documents,
        status_counts,
        resumed_records,
        ledger: client.ledger().totals(),
        client: client.stats(),
        report: report.clone(),
    };
    write_atomic(&out_dir.join(REPORT_JSON_FILE), &serde_json::to_vec_pretty(&report).expect("report serializes"))?;
    let mut md = render_report(std::slice::from_ref(&report), &[], ReportFormat::Markdown);
    md.push_str(&format!(
        "\nDocuments: {}\nArg-I counts: tp={} fp={} fn={}\nArg-C counts: tp={} fp={} fn={}\n",
        report.n_documents,
        report.counts_i.tp,
        report.counts_i.fp,
        report.counts_i.fn_,
        report.counts_c.tp,
        report.counts_c.fp,
        report.counts_c.fn_
    ));
    write_atomic(&out_dir.join(REPORT_MD_FILE), md.as_bytes())?;
    write_atomic(&out_dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))?;
    Ok(manifest)
}
