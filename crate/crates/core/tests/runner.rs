mod common;

use std::sync::Arc;

use common::*;
use eae_core::extract::RecordStatus;
use eae_core::llm::{CostCaps, LlmError, MockScript, MockTransport, SimClock, Transport};
use eae_core::runner::{
    read_manifest, read_predictions, run_experiment, run_experiment_with, RunEnv, RunnerError, MANIFEST_FILE,
    PREDICTIONS_FILE, PROMPTS_DIR, REPORT_JSON_FILE, REPORT_MD_FILE,
};
use eae_core::score::ScoreReport;

fn three_docs() -> Vec<(usize, Vec<&'static str>)> {
    vec![
        (1, vec!["Attacker", "Place"]),
        (2, vec!["Attacker", "Target", "Instrument"]),
        (3, vec!["Target", "Place"]),
    ]
}

fn mock_env(config: &eae_core::ExperimentConfig) -> (RunEnv, Arc<MockTransport>) {
    let script = MockScript::from_path(config.mock.as_ref().unwrap().script.as_ref().unwrap()).unwrap();
    let transport = Arc::new(MockTransport::new(script));
    let env = RunEnv { transport: Some(transport.clone() as Arc<dyn Transport>), clock: Arc::new(SimClock::new()) };
    (env, transport)
}

#[test]
fn perfect_answers_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let docs = three_docs();
    write_corpus(dir.path(), &docs);
    let roles = roles_by_doc(&docs);
    let config = scripted_config(dir.path(), 3, "dhp", "", |id| perfect(doc_index(id), &roles[id]));
    let manifest = run_experiment(&config).unwrap();
    assert_eq!(manifest.report.arg_i.f1, 1.0);
    assert_eq!(manifest.report.arg_c.f1, 1.0);
    assert_eq!(manifest.report.counts_i.tp, 7);
    assert_eq!(manifest.status_counts.get(&RecordStatus::Ok), Some(&3));
    assert_eq!(manifest.n_sampled, 3);
    for f in [MANIFEST_FILE, PREDICTIONS_FILE, REPORT_JSON_FILE, REPORT_MD_FILE, "gold.jsonl", "ledger.jsonl", "config.json"] {
        assert!(config.output_dir.join(f).exists(), "missing {f}");
    }
    assert!(!config.output_dir.join(PROMPTS_DIR).exists());
    let md = std::fs::read_to_string(config.output_dir.join(REPORT_MD_FILE)).unwrap();
    assert!(md.starts_with("Match mode: exact_normalized"));
    assert_eq!(read_manifest(config.output_dir.join(MANIFEST_FILE)).unwrap(), manifest);
}

#[test]
fn rerun_replays_without_transport_calls() {
    let dir = tempfile::tempdir().unwrap();
    let docs = three_docs();
    write_corpus(dir.path(), &docs);
    let roles = roles_by_doc(&docs);
    let config = scripted_config(dir.path(), 3, "cot", "", |id| perfect(doc_index(id), &roles[id]));
    let (env, first) = mock_env(&config);
    let a = run_experiment_with(&config, env).unwrap();
    assert_eq!(first.call_count(), 3);
    let preds_a = std::fs::read(config.output_dir.join(PREDICTIONS_FILE)).unwrap();

    let (env, second) = mock_env(&config);
    let b = run_experiment_with(&config, env).unwrap();
    assert_eq!(second.call_count(), 0);
    assert_eq!(a.report, b.report);
    assert_eq!(b.resumed_records, 3);
    assert_eq!(preds_a, std::fs::read(config.output_dir.join(PREDICTIONS_FILE)).unwrap());

    // A fresh output directory still replays from the shared cache.
    let mut moved = config.clone();
    moved.output_dir = dir.path().join("out2");
    let (env, third) = mock_env(&moved);
    let c = run_experiment_with(&moved, env).unwrap();
    assert_eq!(third.call_count(), 0);
    assert_eq!(c.client.cache_hits, 3);
    assert_eq!(c.report, a.report);
    let report: ScoreReport =
        serde_json::from_str(&std::fs::read_to_string(moved.output_dir.join(REPORT_JSON_FILE)).unwrap()).unwrap();
    assert_eq!(report, a.report);
}

#[test]
fn missing_marker_is_parse_empty() {
    let dir = tempfile::tempdir().unwrap();
    let docs = three_docs();
    write_corpus(dir.path(), &docs);
    let roles = roles_by_doc(&docs);
    let config = scripted_config(dir.path(), 3, "dhp", "", |id| {
        if id == "doc02" {
            "I could not find anything relevant in this text.".into()
        } else {
            perfect(doc_index(id), &roles[id])
        }
    });
    let m = run_experiment(&config).unwrap();
    let status = |id: &str| m.documents.iter().find(|d| d.doc_id == id).unwrap().status;
    assert_eq!(status("doc02"), RecordStatus::ParseEmpty);
    assert_eq!(status("doc01"), RecordStatus::Ok);
    // doc02 holds 3 golds: tp 4, fp 0, fn 3.
    assert_eq!((m.report.counts_i.tp, m.report.counts_i.fp, m.report.counts_i.fn_), (4, 0, 3));
    assert!((m.report.arg_i.recall - 4.0 / 7.0).abs() < 1e-12);
}

#[test]
fn changed_config_refuses_old_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &three_docs());
    let config = scripted_config(dir.path(), 3, "dhp", "", |_| "Final Answers:\n(none)".into());
    run_experiment(&config).unwrap();
    let mut changed = config.clone();
    changed.sampling.seed += 1;
    let err = run_experiment(&changed).unwrap_err();
    assert!(matches!(err, RunnerError::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn request_cap_aborts_and_resume_finishes() {
    let dir = tempfile::tempdir().unwrap();
    let docs = three_docs();
    write_corpus(dir.path(), &docs);
    let roles = roles_by_doc(&docs);
    let mut config = scripted_config(dir.path(), 3, "dhp", "", |id| perfect(doc_index(id), &roles[id]));
    config.cost_caps = CostCaps { max_requests: Some(2), max_total_tokens: None };
    let (env, t) = mock_env(&config);
    let err = run_experiment_with(&config, env).unwrap_err();
    assert!(matches!(err, RunnerError::Llm(LlmError::BudgetExceeded(_))), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert_eq!(t.call_count(), 2);
    assert_eq!(read_predictions(config.output_dir.join(PREDICTIONS_FILE)).unwrap().len(), 2);

    // The cap is per invocation; the resumed run only sends what is missing.
    let (env, t) = mock_env(&config);
    let m = run_experiment_with(&config, env).unwrap();
    assert_eq!(t.call_count(), 1);
    assert_eq!(m.resumed_records, 2);
    assert_eq!(m.report.arg_c.f1, 1.0);
}

#[test]
fn save_prompts_writes_one_file_per_event() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &three_docs());
    let config = scripted_config(dir.path(), 3, "standard", "save_prompts = true", |_| "Final Answers:\n(none)".into());
    run_experiment(&config).unwrap();
    let files: Vec<_> = std::fs::read_dir(config.output_dir.join(PROMPTS_DIR)).unwrap().collect();
    assert_eq!(files.len(), 3);
    let text = std::fs::read_to_string(config.output_dir.join(PROMPTS_DIR).join("doc01__e0.txt")).unwrap();
    assert!(text.contains("Militia1 attacked Convoy1"));
    assert_eq!(text.lines().filter(|l| *l == "Final Answers:").count(), 1);
}

#[test]
fn missing_corpus_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("experiment.toml"), config_text(3, "dhp", "")).unwrap();
    std::fs::write(dir.path().join("script.json"), "{}").unwrap();
    let config = eae_core::ExperimentConfig::load(dir.path().join("experiment.toml")).unwrap();
    let err = run_experiment(&config).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
}

#[test]
fn provider_errors_degrade_and_are_retried_on_resume() {
    use eae_core::llm::{ChatRequest, ProviderConfig, RawCompletion, TransportFailure};
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Fails every request for one document, delegates the rest.
    struct Flaky {
        inner: MockTransport,
        failing: String,
        failures: AtomicUsize,
    }
    impl Transport for Flaky {
        fn send(&self, p: &ProviderConfig, k: Option<&str>, req: &ChatRequest) -> Result<RawCompletion, TransportFailure> {
            if req.messages[1].content.contains(&self.failing) {
                self.failures.fetch_add(1, Ordering::SeqCst);
                return Err(TransportFailure::Status { code: 503, body: "busy".into() });
            }
            self.inner.send(p, k, req)
        }
        fn needs_api_key(&self) -> bool {
            false
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let docs = three_docs();
    write_corpus(dir.path(), &docs);
    let roles = roles_by_doc(&docs);
    let config = scripted_config(dir.path(), 3, "dhp", "", |id| perfect(doc_index(id), &roles[id]));
    let script = MockScript::from_path(dir.path().join("script.json")).unwrap();
    let flaky = Arc::new(Flaky { inner: MockTransport::new(script), failing: "Militia3".into(), failures: AtomicUsize::new(0) });
    let env = RunEnv { transport: Some(flaky.clone()), clock: Arc::new(SimClock::new()) };
    let m = run_experiment_with(&config, env).unwrap();
    assert_eq!(flaky.failures.load(Ordering::SeqCst), 6);
    assert_eq!(m.status_counts.get(&RecordStatus::ProviderError), Some(&1));
    assert_eq!(m.report.counts_i.fn_, 2);
    assert_eq!(m.status_counts.values().sum::<usize>(), 3);

    let (env, t) = mock_env(&config);
    let m = run_experiment_with(&config, env).unwrap();
    assert_eq!(t.call_count(), 1);
    assert_eq!(m.report.arg_i.f1, 1.0);
}
