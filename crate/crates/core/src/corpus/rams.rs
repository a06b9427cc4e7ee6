//! RAMS JSON Lines reader.
//!
//! Consumed fields per line: `doc_key`, `sentences` (list of token lists),
//! `evt_triggers` (`[start, end, [[type, score], ...]]`, inclusive token
//! offsets) and `gold_evt_links` (`[[trig_start, trig_end], [arg_start,
//! arg_end], role_label]`). All other fields are ignored.

use std::path::Path;

use log::warn;
use regex::Regex;
use serde::Deserialize;

use super::{
    read_to_string, Corpus, CorpusError, Dataset, Document, DocumentText, GoldArgument, GoldEvent,
    LoadMode, Span,
};

type Offsets = (usize, usize);

/// `(start, end, [(type, score)])`
type Trigger = (usize, usize, Vec<(String, f64)>);

#[derive(Debug, Deserialize)]
struct RamsRecord {
    doc_key: String,
    sentences: Vec<Vec<String>>,
    #[serde(default)]
    evt_triggers: Vec<Trigger>,
    #[serde(default)]
    gold_evt_links: Vec<(Offsets, Offsets, String)>,
}

pub fn load_rams(path: impl AsRef<Path>, mode: LoadMode) -> Result<Corpus, CorpusError> {
    let content = read_to_string(path.as_ref())?;
    let mut corpus = Corpus::new(Dataset::Rams, Vec::new());
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let parsed = serde_json::from_str::<RamsRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(into_document);
        match (parsed, mode) {
            (Ok(doc), _) => corpus.documents.push(doc),
            (Err(reason), LoadMode::Strict) => return Err(CorpusError::Format { line: line_no, reason }),
            (Err(reason), LoadMode::Lenient) => {
                warn!("skipping RAMS line {line_no}: {reason}");
                corpus.skipped_records += 1;
            }
        }
    }
    Ok(corpus)
}

fn into_document(record: RamsRecord) -> Result<Document, String> {
    let mut doc = Document {
        doc_id: record.doc_key,
        dataset: Dataset::Rams,
        body: DocumentText::Sentences(record.sentences),
        events: Vec::with_capacity(record.evt_triggers.len()),
        domain_tag: None,
    };
    let mut trigger_offsets = Vec::with_capacity(record.evt_triggers.len());
    for (start, end, labels) in record.evt_triggers {
        let (label, _) = labels
            .first()
            .ok_or_else(|| format!("trigger [{start}, {end}] has no event type"))?;
        trigger_offsets.push((start, end));
        doc.events.push(GoldEvent {
            event_type: normalize_event_type(label),
            trigger: Some(inclusive_span(start, end)),
            arguments: Vec::new(),
        });
    }
    for (trigger, arg, label) in record.gold_evt_links {
        let event_idx = trigger_offsets
            .iter()
            .position(|t| *t == trigger)
            .ok_or_else(|| format!("link references unknown trigger [{}, {}]", trigger.0, trigger.1))?;
        let span = inclusive_span(arg.0, arg.1);
        // Out-of-bounds spans keep an empty text; validation reports them.
        let text = doc.span_text(&span).unwrap_or_default();
        doc.events[event_idx].arguments.push(GoldArgument {
            role: normalize_role(&label),
            text,
            span: Some(span),
        });
    }
    Ok(doc)
}

fn inclusive_span(start: usize, end: usize) -> Span {
    Span::tokens(start, end.saturating_add(1))
}

/// `conflict.attack.n/a` -> `Conflict.Attack`.
pub(crate) fn normalize_event_type(label: &str) -> String {
    label
        .split('.')
        .filter(|part| !part.is_empty() && !part.eq_ignore_ascii_case("n/a"))
        .map(capitalize)
        .collect::<Vec<_>>()
        .join(".")
}

/// `evt090arg02victim` -> `Victim`.
pub(crate) fn normalize_role(label: &str) -> String {
    static PREFIX: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let prefix = PREFIX.get_or_init(|| Regex::new(r"^evt\d+arg\d+").expect("valid regex"));
    capitalize(&prefix.replace(label.trim(), ""))
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
