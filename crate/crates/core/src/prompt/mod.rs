//! Prompt assembly for the three strategies.
//!
//! | strategy   | blocks                                                                     |
//! |------------|----------------------------------------------------------------------------|
//! | `dhp`      | task_definition, definitions, heuristics, exemplar, cot_scaffold, query  |
//! | `cot`      | task_definition, exemplar, cot_scaffold, query                            |
//! | `standard` | task_definition, query                                                    |
//!
//! The exemplar block is present only when an exemplar is supplied. Every
//! strategy carries the answer-format instruction exactly once: inside the
//! scaffold when there is one, otherwise at the end of the query block.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod assemble;
mod templates;

pub use assemble::{trim_to_budget, PromptBuilder, TrimAction, TRUNCATION_MARKER};
pub use templates::{Ontology, TemplateSet};

use crate::extract::is_answer_marker;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt needs at least {needed} tokens but only {available} are available")]
    Budget { needed: usize, available: usize },
    #[error("no usable exemplar: {0}")]
    Exemplar(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("max_tokens ({max_tokens}) must exceed reserve_for_completion ({reserve})")]
    InvalidBudget { max_tokens: usize, reserve: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Dhp,
    Cot,
    Standard,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Dhp, Strategy::Cot, Strategy::Standard];

    /// Block kinds the strategy may emit, in order.
    pub fn block_kinds(self) -> &'static [BlockKind] {
        use BlockKind::*;
        match self {
            Strategy::Dhp => &[TaskDefinition, Definitions, Heuristics, Exemplar, CotScaffold, Query],
            Strategy::Cot => &[TaskDefinition, Exemplar, CotScaffold, Query],
            Strategy::Standard => &[TaskDefinition, Query],
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Dhp => "dhp",
            Strategy::Cot => "cot",
            Strategy::Standard => "standard",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    TaskDefinition,
    Definitions,
    Heuristics,
    Exemplar,
    CotScaffold,
    Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCategory {
    RoleRelation,
    Morphology,
    Verification,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeuristicRule {
    pub rule_id: String,
    pub statement: String,
    pub category: RuleCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DefinitionBlock {
    pub event_type: String,
    pub event_definition: String,
    pub terminology: Vec<(String, String)>,
    pub ontology_roles: Vec<(String, String)>,
    /// Set when the event type has no role inventory.
    pub fallback: Option<String>,
}

/// One worked demonstration for in-context learning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarDemo {
    pub document_text: String,
    pub event_type: String,
    #[serde(default)]
    pub trigger: Option<String>,
    pub worked_reasoning: String,
    pub final_answers: Vec<(String, String)>,
}

/// Stage names that a worked reasoning trace must contain, in this order.
pub const STAGE_NAMES: [&str; 3] = ["Initiation", "Expansion", "Verification"];

impl ExemplarDemo {
    pub fn validate(&self) -> Result<(), PromptError> {
        let mut from = 0;
        for stage in STAGE_NAMES {
            match self.worked_reasoning[from..].find(stage) {
                Some(pos) => from += pos + stage.len(),
                None => {
                    return Err(PromptError::Exemplar(format!(
                        "worked reasoning for {} lacks stage {stage} (in order)",
                        self.event_type
                    )))
                }
            }
        }
        if self.final_answers.is_empty() {
            return Err(PromptError::Exemplar(format!("exemplar for {} has no answers", self.event_type)));
        }
        if self.worked_reasoning.lines().any(is_answer_marker) {
            return Err(PromptError::Exemplar("worked reasoning must not contain an answer-marker line".into()));
        }
        Ok(())
    }
}

/// Reads an exemplar file holding one demo object or an array of them.
pub fn load_exemplars(path: impl AsRef<Path>) -> Result<Vec<ExemplarDemo>, PromptError> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path)
        .map_err(|e| PromptError::Exemplar(format!("{}: {e}", path.display())))?;
    parse_exemplars(&json)
}

pub fn parse_exemplars(json: &str) -> Result<Vec<ExemplarDemo>, PromptError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<ExemplarDemo>),
        One(ExemplarDemo),
    }
    let demos = match serde_json::from_str(json).map_err(|e| PromptError::Exemplar(e.to_string()))? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(d) => vec![d],
    };
    demos.iter().try_for_each(ExemplarDemo::validate)?;
    Ok(demos)
}

/// Shipped exemplar pool for a dataset.
pub fn builtin_exemplars(dataset: crate::corpus::Dataset) -> Vec<ExemplarDemo> {
    let json = match dataset {
        crate::corpus::Dataset::Rams => {
            include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/exemplars/rams.json"))
        }
        crate::corpus::Dataset::DocEe => {
            include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/exemplars/docee.json"))
        }
    };
    parse_exemplars(json).expect("embedded exemplars are valid")
}

/// First pool entry usable for the query. With `cross_domain` the entry's
/// event type must differ from the query's.
pub fn select_exemplar<'a>(
    pool: &'a [ExemplarDemo],
    query_event_type: &str,
    cross_domain: bool,
) -> Result<&'a ExemplarDemo, PromptError> {
    pool.iter()
        .find(|demo| !cross_domain || demo.event_type != query_event_type)
        .ok_or_else(|| {
            PromptError::Exemplar(if pool.is_empty() {
                "exemplar pool is empty".to_string()
            } else {
                format!("every exemplar has event type {query_event_type}")
            })
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawBudget")]
pub struct TokenBudget {
    max_tokens: usize,
    reserve_for_completion: usize,
}

#[derive(Deserialize)]
struct RawBudget {
    max_tokens: usize,
    #[serde(default)]
    reserve_for_completion: usize,
}

impl TryFrom<RawBudget> for TokenBudget {
    type Error = PromptError;
    fn try_from(raw: RawBudget) -> Result<Self, Self::Error> {
        TokenBudget::new(raw.max_tokens, raw.reserve_for_completion)
    }
}

impl TokenBudget {
    pub fn new(max_tokens: usize, reserve_for_completion: usize) -> Result<Self, PromptError> {
        if max_tokens == 0 || max_tokens <= reserve_for_completion {
            return Err(PromptError::InvalidBudget { max_tokens, reserve: reserve_for_completion });
        }
        Ok(TokenBudget { max_tokens, reserve_for_completion })
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn reserve_for_completion(&self) -> usize {
        self.reserve_for_completion
    }

    /// Tokens the prompt itself may use.
    pub fn available(&self) -> usize {
        self.max_tokens - self.reserve_for_completion
    }
}

/// `ceil(chars / 4)` over Unicode scalar values.
pub fn count_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// One assembled prompt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub blocks: Vec<(BlockKind, String)>,
    pub token_estimate: usize,
    pub strategy: Strategy,
    /// Trimming applied to fit the budget, in application order.
    pub trims: Vec<TrimAction>,
    #[serde(skip)]
    parts: assemble::PromptParts,
}

impl PromptBundle {
    pub fn block_kinds(&self) -> Vec<BlockKind> {
        self.blocks.iter().map(|(k, _)| *k).collect()
    }

    pub fn block(&self, kind: BlockKind) -> Option<&str> {
        self.blocks.iter().find(|(k, _)| *k == kind).map(|(_, t)| t.as_str())
    }
}
