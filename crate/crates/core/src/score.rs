//! Arg-I / Arg-C micro precision, recall and F1.
//!
//! Arg-I matches a prediction to a gold argument on text alone; Arg-C also
//! requires the (case-insensitive) role to agree. Counts are summed over
//! every `(document, event)` pair before dividing.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::Hash;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, GoldArgument};
use crate::extract::{dedupe_predictions, normalize_text, ExtractionRecord, PredictedArgument};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("record for {doc_id} event {event_index} does not match any gold event")]
    GoldMismatch { doc_id: String, event_index: usize },
    #[error("more than one record for {doc_id} event {event_index}")]
    DuplicateRecord { doc_id: String, event_index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    #[default]
    ExactNormalized,
    /// Compare only the last whitespace token of the normalized text.
    HeadWord,
}

impl MatchMode {
    pub fn key(self, text: &str) -> String {
        let normalized = normalize_text(text);
        match self {
            MatchMode::ExactNormalized => normalized,
            MatchMode::HeadWord => normalized.split(' ').next_back().unwrap_or_default().to_string(),
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::ExactNormalized => "exact_normalized",
            MatchMode::HeadWord => "head_word",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ScoreCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        ScoreCounts { tp, fp, fn_ }
    }
}

impl Add for ScoreCounts {
    type Output = ScoreCounts;
    fn add(self, rhs: Self) -> Self {
        ScoreCounts { tp: self.tp + rhs.tp, fp: self.fp + rhs.fp, fn_: self.fn_ + rhs.fn_ }
    }
}

impl AddAssign for ScoreCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sum for ScoreCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ScoreCounts::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 with every zero denominator mapped to 0.
pub fn micro_f1(counts: ScoreCounts) -> Prf {
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf { precision, recall, f1 }
}

fn multiset<K: Eq + Hash>(keys: impl IntoIterator<Item = K>) -> HashMap<K, u64> {
    let mut counts = HashMap::new();
    for k in keys {
        *counts.entry(k).or_insert(0) += 1;
    }
    counts
}

fn counts_for<K: Eq + Hash>(preds: Vec<K>, golds: Vec<K>) -> ScoreCounts {
    let (n_pred, n_gold) = (preds.len() as u64, golds.len() as u64);
    let pred_counts = multiset(preds);
    let gold_counts = multiset(golds);
    let tp = pred_counts
        .iter()
        .map(|(k, &p)| gold_counts.get(k).map_or(0, |&g| p.min(g)))
        .sum::<u64>();
    ScoreCounts { tp, fp: n_pred - tp, fn_: n_gold - tp }
}

/// Arg-I and Arg-C counts for one `(document, event)` pair.
///
/// Compatibility between a prediction and a gold argument is equality of
/// keys, so the summed multiset minimum equals the size of a maximum
/// one-to-one matching.
pub fn tuple_counts(
    preds: &[PredictedArgument],
    golds: &[GoldArgument],
    mode: MatchMode,
) -> (ScoreCounts, ScoreCounts) {
    let pred_keys: Vec<(String, String)> =
        preds.iter().map(|p| (p.role.trim().to_lowercase(), mode.key(&p.text))).collect();
    let gold_keys: Vec<(String, String)> =
        golds.iter().map(|g| (g.role.trim().to_lowercase(), mode.key(&g.text))).collect();
    let ident = counts_for(
        pred_keys.iter().map(|(_, t)| t.clone()).collect(),
        gold_keys.iter().map(|(_, t)| t.clone()).collect(),
    );
    let class = counts_for(pred_keys, gold_keys);
    (ident, class)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportLabels {
    pub dataset: String,
    pub strategy: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub dataset: String,
    pub strategy: String,
    pub model: String,
    pub arg_i: Prf,
    pub arg_c: Prf,
    pub counts_i: ScoreCounts,
    pub counts_c: ScoreCounts,
    pub n_documents: usize,
    pub match_mode: MatchMode,
}

impl ScoreReport {
    pub fn from_counts(
        labels: &ReportLabels,
        counts_i: ScoreCounts,
        counts_c: ScoreCounts,
        n_documents: usize,
        match_mode: MatchMode,
    ) -> Self {
        ScoreReport {
            dataset: labels.dataset.clone(),
            strategy: labels.strategy.clone(),
            model: labels.model.clone(),
            arg_i: micro_f1(counts_i),
            arg_c: micro_f1(counts_c),
            counts_i,
            counts_c,
            n_documents,
            match_mode,
        }
    }
}

/// Scores `records` against every event of every document in `gold`.
/// Gold events without a record count all their arguments as misses.
pub fn score_corpus(
    records: &[ExtractionRecord],
    gold: &[Document],
    mode: MatchMode,
    labels: &ReportLabels,
) -> Result<ScoreReport, ScoreError> {
    let docs: HashMap<&str, &Document> = gold.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let mut by_event: HashMap<(&str, usize), &ExtractionRecord> = HashMap::new();
    for r in records {
        let mismatch =
            || ScoreError::GoldMismatch { doc_id: r.doc_id.clone(), event_index: r.event_index };
        let doc = docs.get(r.doc_id.as_str()).ok_or_else(mismatch)?;
        let event = doc.events.get(r.event_index).ok_or_else(mismatch)?;
        if event.event_type != r.event_type {
            return Err(mismatch());
        }
        if by_event.insert((r.doc_id.as_str(), r.event_index), r).is_some() {
            return Err(ScoreError::DuplicateRecord { doc_id: r.doc_id.clone(), event_index: r.event_index });
        }
    }

    let mut counts_i = ScoreCounts::default();
    let mut counts_c = ScoreCounts::default();
    let mut seen = HashSet::new();
    let mut n_documents = 0;
    for doc in gold {
        if !seen.insert(doc.doc_id.as_str()) {
            continue;
        }
        n_documents += 1;
        for (idx, event) in doc.events.iter().enumerate() {
            let preds = by_event
                .get(&(doc.doc_id.as_str(), idx))
                .map(|r| dedupe_predictions(r.predictions.clone()))
                .unwrap_or_default();
            let (i, c) = tuple_counts(&preds, &event.arguments, mode);
            counts_i += i;
            counts_c += c;
        }
    }
    Ok(ScoreReport::from_counts(labels, counts_i, counts_c, n_documents, mode))
}
