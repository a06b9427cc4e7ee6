use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{Dataset, Document, Span};

/// A violated document invariant. `event` and `argument` are indices into
/// [`Document::events`] and [`GoldEvent::arguments`](super::GoldEvent).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValidationIssue {
    OutOfBounds { doc_id: String, event: usize, argument: Option<usize>, span: Span, bound: usize },
    InvertedSpan { doc_id: String, event: usize, argument: Option<usize>, span: Span },
    EmptyEventType { doc_id: String, event: usize },
    EmptyRole { doc_id: String, event: usize, argument: usize },
    EmptyArgumentText { doc_id: String, event: usize, argument: usize },
    MissingTrigger { doc_id: String, event: usize },
    UnexpectedTrigger { doc_id: String, event: usize },
    DuplicateDocId { doc_id: String },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationIssue::*;
        match self {
            OutOfBounds { doc_id, event, span, bound, .. } => write!(
                f,
                "{doc_id}: event {event} span [{}, {}) exceeds length {bound}",
                span.start, span.end
            ),
            InvertedSpan { doc_id, event, span, .. } => {
                write!(f, "{doc_id}: event {event} span start {} > end {}", span.start, span.end)
            }
            EmptyEventType { doc_id, event } => write!(f, "{doc_id}: event {event} has no type"),
            EmptyRole { doc_id, event, argument } => {
                write!(f, "{doc_id}: event {event} argument {argument} has an empty role")
            }
            EmptyArgumentText { doc_id, event, argument } => {
                write!(f, "{doc_id}: event {event} argument {argument} has empty text")
            }
            MissingTrigger { doc_id, event } => write!(f, "{doc_id}: RAMS event {event} has no trigger"),
            UnexpectedTrigger { doc_id, event } => write!(f, "{doc_id}: DocEE event {event} has a trigger"),
            DuplicateDocId { doc_id } => write!(f, "duplicate doc_id {doc_id}"),
        }
    }
}

/// Every invariant violation in `doc`; an empty result means the document
/// is valid.
pub fn validate_document(doc: &Document) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let doc_id = &doc.doc_id;
    let check_span = |issues: &mut Vec<ValidationIssue>, event: usize, argument: Option<usize>, span: &Span| {
        let bound = doc.len_in(span.unit);
        if span.start > span.end {
            issues.push(ValidationIssue::InvertedSpan { doc_id: doc_id.clone(), event, argument, span: *span });
        } else if span.end > bound {
            issues.push(ValidationIssue::OutOfBounds { doc_id: doc_id.clone(), event, argument, span: *span, bound });
        }
    };
    for (ei, event) in doc.events.iter().enumerate() {
        if event.event_type.trim().is_empty() {
            issues.push(ValidationIssue::EmptyEventType { doc_id: doc_id.clone(), event: ei });
        }
        match (doc.dataset, &event.trigger) {
            (Dataset::Rams, None) => issues.push(ValidationIssue::MissingTrigger { doc_id: doc_id.clone(), event: ei }),
            (Dataset::DocEe, Some(_)) => {
                issues.push(ValidationIssue::UnexpectedTrigger { doc_id: doc_id.clone(), event: ei })
            }
            (_, Some(span)) => check_span(&mut issues, ei, None, span),
            _ => {}
        }
        for (ai, arg) in event.arguments.iter().enumerate() {
            if arg.role.trim().is_empty() {
                issues.push(ValidationIssue::EmptyRole { doc_id: doc_id.clone(), event: ei, argument: ai });
            }
            if arg.text.trim().is_empty() {
                issues.push(ValidationIssue::EmptyArgumentText { doc_id: doc_id.clone(), event: ei, argument: ai });
            }
            if let Some(span) = &arg.span {
                check_span(&mut issues, ei, Some(ai), span);
            }
        }
    }
    issues
}

/// Per-document issues plus corpus-level doc_id uniqueness.
pub fn validate_corpus(docs: &[Document]) -> Vec<ValidationIssue> {
    let mut seen = HashSet::new();
    let mut issues = Vec::new();
    for doc in docs {
        if !seen.insert(doc.doc_id.as_str()) {
            issues.push(ValidationIssue::DuplicateDocId { doc_id: doc.doc_id.clone() });
        }
        issues.extend(validate_document(doc));
    }
    issues
}
