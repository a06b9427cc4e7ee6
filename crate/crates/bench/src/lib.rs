//! Shared fixtures for the criterion benches.

use eae_core::corpus::{Dataset, Document, DocumentText, GoldArgument, GoldEvent, Span};
use eae_core::extract::PredictedArgument;

const WORDS: &[&str] = &[
    "troops", "fired", "on", "the", "village", "near", "Homs", "killing", "three", "civilians", "and", "a", "medic",
];

/// Deterministic pseudo-text of `n` tokens.
pub fn tokens(n: usize) -> Vec<String> {
    (0..n).map(|i| WORDS[(i * 7 + i / 13) % WORDS.len()].to_string()).collect()
}

/// One tokenized document with a single attack event and `args` arguments.
pub fn document(id: usize, n_tokens: usize, args: usize) -> Document {
    let toks = tokens(n_tokens.max(args + 2));
    let arguments = (0..args)
        .map(|k| GoldArgument {
            role: ["Attacker", "Target", "Instrument", "Place"][k % 4].into(),
            text: toks[k + 2].clone(),
            span: Some(Span::tokens(k + 2, k + 3)),
        })
        .collect();
    Document {
        doc_id: format!("bench{id}"),
        dataset: Dataset::Rams,
        body: DocumentText::Sentences(vec![toks]),
        events: vec![GoldEvent { event_type: "Conflict.Attack".into(), trigger: Some(Span::tokens(1, 2)), arguments }],
        domain_tag: None,
    }
}

/// Predictions for `doc` where every other gold argument is recovered and
/// the rest are replaced by a wrong guess.
pub fn predictions(doc: &Document) -> Vec<PredictedArgument> {
    doc.events[0]
        .arguments
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let text = if k % 2 == 0 { g.text.clone() } else { format!("not {}", g.text) };
            PredictedArgument::new(g.role.clone(), text, k + 1)
        })
        .collect()
}

/// A reasoning trace followed by a canonical answer section.
pub fn response(doc: &Document) -> String {
    let mut s = String::from("Stage 1 - Initiation: the trigger is fired.\nStage 2 - Expansion: scan.\n");
    s.push_str("Stage 3 - Verification: done.\nFinal Answers:\n");
    for p in predictions(doc) {
        s.push_str(&format!("{}: \"{}\"; \"{} extra\"\n", p.role, p.text, p.text));
    }
    s
}
