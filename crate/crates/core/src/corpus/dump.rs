//! Normalized corpus dump: one document per line, `"schema": 1`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_to_string, CorpusError, Dataset, Document, DocumentText, GoldEvent};
use crate::versioned::Versioned;
use crate::SCHEMA_VERSION;

pub const DUMP_FILE_NAME: &str = "gold.jsonl";

#[derive(Debug, Serialize, Deserialize)]
struct DumpRecord {
    doc_id: String,
    dataset: Dataset,
    text: String,
    /// Present for tokenized documents so token spans stay resolvable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentences: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain_tag: Option<String>,
    events: Vec<GoldEvent>,
}

impl From<&Document> for DumpRecord {
    fn from(doc: &Document) -> Self {
        DumpRecord {
            doc_id: doc.doc_id.clone(),
            dataset: doc.dataset,
            text: doc.text(),
            sentences: match &doc.body {
                DocumentText::Sentences(s) => Some(s.clone()),
                DocumentText::Raw(_) => None,
            },
            domain_tag: doc.domain_tag.clone(),
            events: doc.events.clone(),
        }
    }
}

impl From<DumpRecord> for Document {
    fn from(r: DumpRecord) -> Self {
        Document {
            doc_id: r.doc_id,
            dataset: r.dataset,
            body: match r.sentences {
                Some(s) => DocumentText::Sentences(s),
                None => DocumentText::Raw(r.text),
            },
            events: r.events,
            domain_tag: r.domain_tag,
        }
    }
}

/// Serializes `docs` in order. Output is deterministic for equal input.
pub fn write_dump<W: Write>(docs: &[Document], mut out: W) -> std::io::Result<()> {
    for doc in docs {
        let line = serde_json::to_string(&Versioned::new(DumpRecord::from(doc)))?;
        writeln!(out, "{line}")?;
    }
    out.flush()
}

pub fn read_dump(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    let content = read_to_string(path.as_ref())?;
    parse_dump(&content)
}

pub(crate) fn parse_dump(content: &str) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Versioned<DumpRecord> = serde_json::from_str(line)
            .map_err(|e| CorpusError::Format { line: idx + 1, reason: e.to_string() })?;
        if record.schema != SCHEMA_VERSION {
            return Err(CorpusError::Format {
                line: idx + 1,
                reason: format!("unsupported schema {}", record.schema),
            });
        }
        docs.push(record.inner.into());
    }
    Ok(docs)
}
