//! Unified document model for the RAMS and DocEE evaluation splits.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod docee;
mod dump;
mod rams;
mod sample;
mod validate;

pub use docee::load_docee;
pub use dump::{read_dump, write_dump, DUMP_FILE_NAME};
pub use rams::load_rams;
pub use sample::sample_subset;
pub use validate::{validate_corpus, validate_document, ValidationIssue};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// `line` is the 1-based line for JSON Lines input and the 1-based
    /// record index for JSON array input.
    #[error("malformed record at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("DocEE {setting} split not found under {path}")]
    Setting { setting: DocEeSetting, path: PathBuf },
    #[error("cannot sample {requested} documents from a corpus of {available}")]
    Sample { requested: usize, available: usize },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.into(), source }
    }
}

/// How loaders treat malformed records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// The first malformed record aborts the load.
    #[default]
    Strict,
    /// Malformed records are skipped and counted in [`Corpus::skipped_records`].
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "RAMS")]
    Rams,
    #[serde(rename = "DocEE")]
    DocEe,
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::Rams => "RAMS",
            Dataset::DocEe => "DocEE",
        })
    }
}

/// DocEE evaluation setting. Under `CrossDomain` the evaluation event types
/// do not overlap the event types the demonstrations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocEeSetting {
    #[default]
    Normal,
    CrossDomain,
}

impl DocEeSetting {
    /// Directory name of the split inside a DocEE data directory.
    pub fn dir_name(self) -> &'static str {
        match self {
            DocEeSetting::Normal => "normal",
            DocEeSetting::CrossDomain => "cross",
        }
    }
}

impl fmt::Display for DocEeSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DocEeSetting::Normal => "normal",
            DocEeSetting::CrossDomain => "cross_domain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanUnit {
    Token,
    Character,
}

/// Half-open `[start, end)` offsets into the document, counted in tokens
/// (over the flattened sentence list) or in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub unit: SpanUnit,
}

impl Span {
    pub fn tokens(start: usize, end: usize) -> Self {
        Span { start, end, unit: SpanUnit::Token }
    }

    pub fn chars(start: usize, end: usize) -> Self {
        Span { start, end, unit: SpanUnit::Character }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldArgument {
    pub role: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEvent {
    pub event_type: String,
    /// Token span of the trigger. DocEE events are document-level and
    /// carry no trigger.
    pub trigger: Option<Span>,
    pub arguments: Vec<GoldArgument>,
}

/// Document body: tokenized sentences (RAMS) or raw text (DocEE).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DocumentText {
    Sentences(Vec<Vec<String>>),
    Raw(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub dataset: Dataset,
    pub body: DocumentText,
    pub events: Vec<GoldEvent>,
    pub domain_tag: Option<String>,
}

impl Document {
    /// Plain text of the document. Tokens are joined with single spaces and
    /// sentences with a newline.
    pub fn text(&self) -> String {
        match &self.body {
            DocumentText::Sentences(sentences) => sentences
                .iter()
                .map(|s| s.join(" "))
                .collect::<Vec<_>>()
                .join("\n"),
            DocumentText::Raw(text) => text.clone(),
        }
    }

    pub fn token_count(&self) -> Option<usize> {
        match &self.body {
            DocumentText::Sentences(sentences) => Some(sentences.iter().map(Vec::len).sum()),
            DocumentText::Raw(_) => None,
        }
    }

    /// Length of the document in the given span unit.
    pub fn len_in(&self, unit: SpanUnit) -> usize {
        match (unit, &self.body) {
            (SpanUnit::Token, DocumentText::Sentences(s)) => s.iter().map(Vec::len).sum(),
            (SpanUnit::Token, DocumentText::Raw(t)) => t.split_whitespace().count(),
            (SpanUnit::Character, _) => self.text().chars().count(),
        }
    }

    /// Surface text covered by `span`, or `None` when it is out of bounds.
    pub fn span_text(&self, span: &Span) -> Option<String> {
        if span.start > span.end || span.end > self.len_in(span.unit) {
            return None;
        }
        match (span.unit, &self.body) {
            (SpanUnit::Token, DocumentText::Sentences(s)) => Some(
                s.iter()
                    .flatten()
                    .skip(span.start)
                    .take(span.end - span.start)
                    .map(String::as_str)
                    .collect::<Vec<_>>()
                    .join(" "),
            ),
            (SpanUnit::Token, DocumentText::Raw(t)) => Some(
                t.split_whitespace()
                    .skip(span.start)
                    .take(span.end - span.start)
                    .collect::<Vec<_>>()
                    .join(" "),
            ),
            (SpanUnit::Character, _) => Some(
                self.text()
                    .chars()
                    .skip(span.start)
                    .take(span.end - span.start)
                    .collect(),
            ),
        }
    }

    /// Trigger surface text of `event`, if it has an in-bounds trigger.
    pub fn trigger_text(&self, event: &GoldEvent) -> Option<String> {
        event.trigger.as_ref().and_then(|span| self.span_text(span))
    }
}

/// A loaded evaluation split.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dataset: Dataset,
    /// Only set for DocEE loads.
    pub setting: Option<DocEeSetting>,
    pub documents: Vec<Document>,
    pub skipped_records: usize,
}

impl Corpus {
    pub fn new(dataset: Dataset, documents: Vec<Document>) -> Self {
        Corpus { dataset, setting: None, documents, skipped_records: 0 }
    }

    /// Event types present in the evaluation documents. Cross-domain
    /// exemplar selection checks demonstrations against this set.
    pub fn event_types(&self) -> BTreeSet<String> {
        self.documents
            .iter()
            .flat_map(|d| d.events.iter().map(|e| e.event_type.clone()))
            .collect()
    }

    pub fn is_cross_domain(&self) -> bool {
        self.setting == Some(DocEeSetting::CrossDomain)
    }

    /// Label used in reports: `RAMS`, `DocEE-Normal` or `DocEE-Cross`.
    pub fn label(&self) -> &'static str {
        match (self.dataset, self.setting) {
            (Dataset::Rams, _) => "RAMS",
            (Dataset::DocEe, Some(DocEeSetting::CrossDomain)) => "DocEE-Cross",
            (Dataset::DocEe, _) => "DocEE-Normal",
        }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))
}
