//! DocEE reader.
//!
//! A split is one JSON array file. `path` may point at that file directly or
//! at a data directory laid out as `<dir>/normal/test.json` and
//! `<dir>/cross/test.json`.
//!
//! Consumed fields per record: `title`, `text`, `event_type`, `arguments`
//! (`{"type", "text", "start", "end"}` with character offsets into `text`),
//! plus optional `doc_id` (or `id`) and `domain`. Title and text are joined
//! with a blank line; argument offsets are shifted accordingly.

use std::path::{Path, PathBuf};

use log::warn;
use serde::Deserialize;

use super::{
    read_to_string, Corpus, CorpusError, Dataset, DocEeSetting, Document, DocumentText,
    GoldArgument, GoldEvent, LoadMode, Span,
};

const SPLIT_FILE: &str = "test.json";

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RecordId {
    Text(String),
    Number(u64),
}

#[derive(Debug, Deserialize)]
struct DocEeArgument {
    #[serde(alias = "role")]
    r#type: String,
    text: String,
    #[serde(default)]
    start: Option<usize>,
    #[serde(default)]
    end: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct DocEeRecord {
    #[serde(default, alias = "id")]
    doc_id: Option<RecordId>,
    #[serde(default)]
    title: String,
    text: String,
    event_type: String,
    #[serde(default)]
    arguments: Vec<DocEeArgument>,
    #[serde(default)]
    domain: Option<String>,
}

pub fn load_docee(
    path: impl AsRef<Path>,
    setting: DocEeSetting,
    mode: LoadMode,
) -> Result<Corpus, CorpusError> {
    let file = resolve_split(path.as_ref(), setting)?;
    let content = read_to_string(&file)?;
    let mut corpus = Corpus::new(Dataset::DocEe, Vec::new());
    corpus.setting = Some(setting);
    if content.trim().is_empty() {
        return Ok(corpus);
    }
    let values: Vec<serde_json::Value> = serde_json::from_str(&content)
        .map_err(|e| CorpusError::Format { line: e.line(), reason: e.to_string() })?;
    for (idx, value) in values.into_iter().enumerate() {
        let record_no = idx + 1;
        let parsed = serde_json::from_value::<DocEeRecord>(value)
            .map_err(|e| e.to_string())
            .map(|r| into_document(r, idx));
        match (parsed, mode) {
            (Ok(doc), _) => corpus.documents.push(doc),
            (Err(reason), LoadMode::Strict) => return Err(CorpusError::Format { line: record_no, reason }),
            (Err(reason), LoadMode::Lenient) => {
                warn!("skipping DocEE record {record_no}: {reason}");
                corpus.skipped_records += 1;
            }
        }
    }
    Ok(corpus)
}

fn resolve_split(path: &Path, setting: DocEeSetting) -> Result<PathBuf, CorpusError> {
    if path.is_dir() {
        let file = path.join(setting.dir_name()).join(SPLIT_FILE);
        if file.is_file() {
            Ok(file)
        } else {
            Err(CorpusError::Setting { setting, path: path.to_path_buf() })
        }
    } else if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(CorpusError::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)))
    }
}

fn into_document(record: DocEeRecord, index: usize) -> Document {
    let doc_id = match record.doc_id {
        Some(RecordId::Text(id)) => id,
        Some(RecordId::Number(n)) => n.to_string(),
        None => format!("docee-{index}"),
    };
    let (text, shift) = if record.title.trim().is_empty() {
        (record.text, 0)
    } else {
        let shift = record.title.chars().count() + 2;
        (format!("{}\n\n{}", record.title, record.text), shift)
    };
    let arguments = record
        .arguments
        .into_iter()
        .map(|a| GoldArgument {
            role: a.r#type,
            text: a.text,
            span: match (a.start, a.end) {
                (Some(s), Some(e)) => Some(Span::chars(s + shift, e + shift)),
                _ => None,
            },
        })
        .collect();
    Document {
        doc_id,
        dataset: Dataset::DocEe,
        body: DocumentText::Raw(text),
        events: vec![GoldEvent { event_type: record.event_type, trigger: None, arguments }],
        domain_tag: record.domain,
    }
}
