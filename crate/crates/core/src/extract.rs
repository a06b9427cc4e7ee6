//! Parsing model replies into `(role, argument)` tuples.
//!
//! Replies are expected to end with an answer section:
//!
//! ```text
//! Final Answers:
//! Agent: "John Smith"
//! Place: Paris; London
//! ```
//!
//! Only the section after the last marker line is read. Without a marker the
//! whole reply is scanned for `Role: value` lines. Parsing never fails.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Literal line that opens the answer section.
pub const ANSWER_MARKER: &str = "Final Answers:";

/// Role labels that show up as `Label: ...` lines in reasoning text and are
/// never argument roles. Only consulted when scanning without a marker.
const SCAFFOLD_LABELS: &[&str] = &[
    "stage", "step", "initiation", "expansion", "verification", "reasoning", "document", "trigger",
    "event", "event type", "note", "answer", "answers", "candidates", "candidate", "conclusion",
    "explanation", "summary", "final answer",
];

const NULL_VALUES: &[&str] = &["none", "(none)", "n/a", "na", "null", "unknown", "-", "nil"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedArgument {
    pub role: String,
    pub text: String,
    pub normalized: String,
    /// Zero-based line index in the raw response.
    pub source_line: usize,
}

impl PredictedArgument {
    pub fn new(role: impl Into<String>, text: impl Into<String>, source_line: usize) -> Self {
        let text = text.into();
        PredictedArgument { role: role.into(), normalized: normalize_text(&text), text, source_line }
    }

    /// Key under which duplicates collapse.
    pub fn dedupe_key(&self) -> (String, String) {
        (self.role.to_lowercase(), self.normalized.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    Canonical,
    Lenient,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostics {
    pub mode_used: ParseMode,
    pub skipped_lines: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Outcome of one extraction attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    ParseEmpty,
    ProviderError,
}

/// One queried `(document, event)` pair with its parsed predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub doc_id: String,
    /// Index of the queried event in the gold document.
    #[serde(default)]
    pub event_index: usize,
    pub event_type: String,
    pub trigger: Option<String>,
    pub raw_response: String,
    pub predictions: Vec<PredictedArgument>,
    pub diagnostics: ParseDiagnostics,
    #[serde(default = "default_status")]
    pub status: RecordStatus,
}

fn default_status() -> RecordStatus {
    RecordStatus::Ok
}

/// True for a line that opens the answer section. Tolerates surrounding
/// whitespace, markdown emphasis/heading marks and case.
pub fn is_answer_marker(line: &str) -> bool {
    let stripped = line.trim().trim_start_matches('#').trim().trim_matches('*').trim();
    stripped.eq_ignore_ascii_case(ANSWER_MARKER)
}

fn answer_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:[-*•]\s+|\d{1,2}[.)]\s+)?([A-Za-z][A-Za-z0-9 _./&-]{0,47}?)\s*:\s*(.*?)\s*$")
            .expect("valid regex")
    })
}

fn is_null_value(value: &str) -> bool {
    NULL_VALUES.iter().any(|n| value.eq_ignore_ascii_case(n))
}

fn strip_quotes(value: &str) -> &str {
    let v = value.trim();
    for (open, close) in [('"', '"'), ('\u{201c}', '\u{201d}'), ('\'', '\'')] {
        if v.len() >= open.len_utf8() + close.len_utf8() && v.starts_with(open) && v.ends_with(close) {
            return v[open.len_utf8()..v.len() - close.len_utf8()].trim();
        }
    }
    v
}

enum LineOutcome {
    Blank,
    Null,
    Skipped,
    Values(String, Vec<String>),
}

fn classify_line(line: &str, lenient: bool) -> LineOutcome {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return LineOutcome::Blank;
    }
    if is_null_value(trimmed.trim_start_matches(['-', '*']).trim()) {
        return LineOutcome::Null;
    }
    let Some(caps) = answer_line().captures(line) else {
        return LineOutcome::Skipped;
    };
    let role = caps[1].trim().to_string();
    if lenient && SCAFFOLD_LABELS.iter().any(|l| role.to_lowercase().starts_with(l)) {
        return LineOutcome::Skipped;
    }
    let raw = caps[2].trim();
    if raw.is_empty() {
        return LineOutcome::Skipped;
    }
    if is_null_value(strip_quotes(raw)) {
        return LineOutcome::Null;
    }
    let values: Vec<String> = raw
        .split(';')
        .map(strip_quotes)
        .filter(|v| !v.is_empty() && !is_null_value(v))
        .map(str::to_string)
        .collect();
    if values.is_empty() {
        LineOutcome::Null
    } else {
        LineOutcome::Values(role, values)
    }
}

fn scan<'a>(lines: impl Iterator<Item = (usize, &'a str)>, lenient: bool) -> (Vec<PredictedArgument>, usize, Vec<String>) {
    let mut preds = Vec::new();
    let mut skipped = 0;
    let mut warnings = Vec::new();
    for (idx, line) in lines {
        match classify_line(line, lenient) {
            LineOutcome::Blank | LineOutcome::Null => {}
            LineOutcome::Skipped => skipped += 1,
            LineOutcome::Values(role, values) => {
                for value in values {
                    let pred = PredictedArgument::new(role.clone(), value, idx);
                    if pred.normalized.is_empty() {
                        warnings.push(format!("line {idx}: argument normalizes to empty text"));
                        skipped += 1;
                    } else {
                        preds.push(pred);
                    }
                }
            }
        }
    }
    (preds, skipped, warnings)
}

/// Parses a raw model reply. Total: any input yields a result.
pub fn parse_response(raw: &str) -> (Vec<PredictedArgument>, ParseDiagnostics) {
    let lines: Vec<&str> = raw.lines().collect();
    let marker = lines.iter().rposition(|l| is_answer_marker(l));
    let (preds, skipped, mut warnings, mode) = match marker {
        Some(pos) => {
            let (p, s, w) = scan(lines.iter().copied().enumerate().skip(pos + 1), false);
            (p, s, w, ParseMode::Canonical)
        }
        None => {
            let (p, s, w) = scan(lines.iter().copied().enumerate(), true);
            let mode = if p.is_empty() { ParseMode::Empty } else { ParseMode::Lenient };
            (p, s, w, mode)
        }
    };
    if marker.is_some() && lines.iter().filter(|l| is_answer_marker(l)).count() > 1 {
        warnings.push("multiple answer sections; parsed the last one".to_string());
    }
    (preds, ParseDiagnostics { mode_used: mode, skipped_lines: skipped, warnings })
}

/// Renders predictions in the canonical answer grammar. Argument texts
/// containing `;` or line breaks do not survive a re-parse unchanged.
pub fn render_canonical(preds: &[PredictedArgument]) -> String {
    let mut out = String::from(ANSWER_MARKER);
    for p in preds {
        out.push('\n');
        out.push_str(&format!("{}: \"{}\"", p.role, p.text));
    }
    out
}

fn normalize_once(s: &str) -> String {
    let lowered = s.nfkc().collect::<String>().to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let stripped = collapsed.trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    let without_article = ["the ", "a ", "an "]
        .iter()
        .find_map(|a| stripped.strip_prefix(a))
        .unwrap_or(stripped);
    without_article.trim().to_string()
}

/// NFKC, lowercase, whitespace collapse, surrounding ASCII punctuation and a
/// leading article removed. Applied to a fixed point so the result is
/// idempotent.
pub fn normalize_text(s: &str) -> String {
    let mut current = normalize_once(s);
    // Each pass either shortens the string or leaves it unchanged in
    // practice; the cap guards against pathological case mappings.
    for _ in 0..16 {
        let next = normalize_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

/// Keeps the first occurrence of each `(role, normalized)` pair. Roles are
/// compared case-insensitively.
pub fn dedupe_predictions(preds: Vec<PredictedArgument>) -> Vec<PredictedArgument> {
    let mut seen = HashSet::new();
    preds.into_iter().filter(|p| seen.insert(p.dedupe_key())).collect()
}

/// Rewrites predicted roles to the ontology's spelling when they match
/// case-insensitively. Unknown roles are kept as written.
pub fn canonicalize_roles(preds: &mut [PredictedArgument], ontology_roles: &[String]) {
    for p in preds {
        if let Some(role) = ontology_roles.iter().find(|r| r.eq_ignore_ascii_case(p.role.trim())) {
            p.role = role.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(preds: &[PredictedArgument]) -> Vec<(&str, &str)> {
        preds.iter().map(|p| (p.role.as_str(), p.text.as_str())).collect()
    }

    #[test]
    fn canonical_section() {
        let raw = "Stage 1: the trigger is attacked.\nFinal Answers:\nAgent: \"John Smith\"\nPlace: Paris";
        let (preds, diag) = parse_response(raw);
        assert_eq!(pairs(&preds), vec![("Agent", "John Smith"), ("Place", "Paris")]);
        assert_eq!(diag.mode_used, ParseMode::Canonical);
        assert_eq!(diag.skipped_lines, 0);
        assert_eq!(preds[0].source_line, 2);
    }

    #[test]
    fn nothing_parsable() {
        let (preds, diag) = parse_response("I cannot determine any arguments.");
        assert!(preds.is_empty());
        assert_eq!(diag.mode_used, ParseMode::Empty);
        assert_eq!(diag.skipped_lines, 1);
    }

    #[test]
    fn last_marker_wins() {
        let raw = "Final Answers:\nAgent: Bob\n\nWait, let me re-check.\nFinal Answers:\nVictim: Alice";
        let (preds, diag) = parse_response(raw);
        assert_eq!(pairs(&preds), vec![("Victim", "Alice")]);
        assert_eq!(diag.warnings.len(), 1);
    }

    #[test]
    fn lenient_scan_without_marker() {
        let raw = "Stage 2 - Expansion: thinking\nAgent: \"the rebels\"\nsome prose";
        let (preds, diag) = parse_response(raw);
        assert_eq!(pairs(&preds), vec![("Agent", "the rebels")]);
        assert_eq!(diag.mode_used, ParseMode::Lenient);
        assert_eq!(diag.skipped_lines, 2);
    }

    #[test]
    fn multi_value_lines_split_on_semicolon() {
        let (preds, _) = parse_response("Final Answers:\nPlace: Paris; \"London\"\n- Time: none");
        assert_eq!(pairs(&preds), vec![("Place", "Paris"), ("Place", "London")]);
    }

    #[test]
    fn null_answers_are_not_skipped_lines() {
        let (preds, diag) = parse_response("Final Answers:\n(none)");
        assert!(preds.is_empty());
        assert_eq!(diag.mode_used, ParseMode::Canonical);
        assert_eq!(diag.skipped_lines, 0);
    }

    #[test]
    fn markdown_marker_is_recognised() {
        let (preds, diag) = parse_response("**Final Answers:**\n1. Agent: Bob");
        assert_eq!(pairs(&preds), vec![("Agent", "Bob")]);
        assert_eq!(diag.mode_used, ParseMode::Canonical);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_text("  The  White House. "), "white house");
        assert_eq!(normalize_text("Paris"), "paris");
        assert_eq!(normalize_text("ＡＢＣ"), "abc");
        assert_eq!(normalize_text("an apple"), "apple");
        assert_eq!(normalize_text("Anna"), "anna");
    }

    #[test]
    fn dedupe_examples() {
        let john = PredictedArgument::new("Agent", "john", 0);
        assert_eq!(dedupe_predictions(vec![john.clone(), john.clone()]), vec![john.clone()]);
        let victim = PredictedArgument::new("Victim", "john", 1);
        assert_eq!(dedupe_predictions(vec![john.clone(), victim.clone()]), vec![john, victim]);
        assert!(dedupe_predictions(vec![]).is_empty());
    }

    #[test]
    fn roles_snap_to_ontology_spelling() {
        let mut preds = vec![PredictedArgument::new("agent", "x", 0), PredictedArgument::new("Weapon", "y", 1)];
        canonicalize_roles(&mut preds, &["Agent".to_string(), "Instrument".to_string()]);
        assert_eq!(preds[0].role, "Agent");
        assert_eq!(preds[1].role, "Weapon");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in any::<String>()) {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn parse_is_total(s in any::<String>()) {
            let (preds, diag) = parse_response(&s);
            if diag.mode_used == ParseMode::Empty {
                prop_assert!(preds.is_empty());
            }
        }

        #[test]
        fn dedupe_is_idempotent(items in proptest::collection::vec(("[AB]", "[xy ]{1,3}"), 0..8)) {
            let preds: Vec<_> = items.iter().enumerate()
                .map(|(i, (r, t))| PredictedArgument::new(r.as_str(), t.as_str(), i)).collect();
            let once = dedupe_predictions(preds.clone());
            prop_assert!(once.len() <= preds.len());
            prop_assert_eq!(dedupe_predictions(once.clone()), once);
        }
    }
}
