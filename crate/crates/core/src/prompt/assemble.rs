use std::borrow::Cow;
use std::sync::Arc;

use serde::Serialize;

use super::{
    count_tokens, BlockKind, DefinitionBlock, ExemplarDemo, HeuristicRule, Ontology, PromptBundle,
    PromptError, Strategy, TemplateSet, TokenBudget,
};
use crate::corpus::{Document, GoldEvent};
use crate::extract::is_answer_marker;

/// Appended to any text cut short by trimming.
pub const TRUNCATION_MARKER: &str = "[TRUNCATED]";
const TRUNCATION_SUFFIX: &str = "\n[TRUNCATED]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum TrimAction {
    ReasoningTruncated { kept_chars: usize },
    RuleDropped { rule_id: String },
    ExemplarDropped,
    QueryTruncated { kept_chars: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct ExemplarParts {
    demo: ExemplarDemo,
    reasoning_kept: Option<usize>,
}

/// Structured source of a bundle, kept so trimming can re-render.
#[derive(Debug, Clone, PartialEq)]
pub(super) struct PromptParts {
    templates: Arc<TemplateSet>,
    strategy: Strategy,
    definitions: Option<String>,
    rules: Vec<HeuristicRule>,
    exemplar: Option<ExemplarParts>,
    scaffold: Option<String>,
    document: String,
    document_kept: Option<usize>,
    event_type: String,
    trigger: Option<String>,
}

enum Slot<'a> {
    /// Untrusted text: answer-marker lines are quoted out.
    Text(&'a str),
    Raw(&'a str),
}

/// Prefixes any line that would read as the answer marker, so the real
/// instruction stays the only one.
fn sanitize(value: &str) -> Cow<'_, str> {
    if !value.split('\n').any(is_answer_marker) {
        return Cow::Borrowed(value);
    }
    Cow::Owned(
        value
            .split('\n')
            .map(|line| if is_answer_marker(line) { Cow::Owned(format!("> {line}")) } else { Cow::Borrowed(line) })
            .collect::<Vec<_>>()
            .join("\n"),
    )
}

/// Single-pass `{name}` substitution; unknown placeholders are left as is.
fn fill(template: &str, slots: &[(&str, Slot<'_>)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after
            .find('}')
            .and_then(|close| slots.iter().find(|(k, _)| *k == &after[..close]).map(|(_, s)| (close, s)));
        match hit {
            Some((close, slot)) => {
                match slot {
                    Slot::Text(v) => out.push_str(&sanitize(v)),
                    Slot::Raw(v) => out.push_str(v),
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn truncated(text: &str, kept: Option<usize>) -> Cow<'_, str> {
    match kept {
        None => Cow::Borrowed(text),
        Some(k) => Cow::Owned(text.chars().take(k).chain(TRUNCATION_SUFFIX.chars()).collect()),
    }
}

fn render_answers(answers: &[(String, String)]) -> String {
    answers.iter().map(|(role, text)| format!("{role}: \"{text}\"")).collect::<Vec<_>>().join("\n")
}

fn trigger_line(trigger: Option<&str>) -> String {
    trigger.map(str::to_string).unwrap_or_else(|| "none (the event type stands in for the trigger)".into())
}

impl PromptParts {
    fn render(&self) -> Vec<(BlockKind, String)> {
        let t = &self.templates;
        let mut blocks = vec![(BlockKind::TaskDefinition, t.task_definition.clone())];
        if let Some(defs) = &self.definitions {
            blocks.push((BlockKind::Definitions, defs.clone()));
        }
        if self.strategy == Strategy::Dhp && !self.rules.is_empty() {
            let rules = self
                .rules
                .iter()
                .map(|r| format!("[{}] {}", r.rule_id, r.statement))
                .collect::<Vec<_>>()
                .join("\n");
            blocks.push((BlockKind::Heuristics, fill(&t.heuristics_block, &[("rules", Slot::Text(&rules))])));
        }
        if let Some(ex) = &self.exemplar {
            let demo = &ex.demo;
            let reasoning = truncated(&demo.worked_reasoning, ex.reasoning_kept);
            let trigger = trigger_line(demo.trigger.as_deref());
            let answers = render_answers(&demo.final_answers);
            blocks.push((
                BlockKind::Exemplar,
                fill(
                    &t.exemplar,
                    &[
                        ("document", Slot::Text(&demo.document_text)),
                        ("event_type", Slot::Text(&demo.event_type)),
                        ("trigger", Slot::Text(&trigger)),
                        ("reasoning", Slot::Text(&reasoning)),
                        ("answers", Slot::Text(&answers)),
                    ],
                ),
            ));
        }
        if let Some(scaffold) = &self.scaffold {
            blocks.push((BlockKind::CotScaffold, scaffold.clone()));
        }
        let document = truncated(&self.document, self.document_kept);
        let trigger = trigger_line(self.trigger.as_deref());
        let mut query = fill(
            &t.query,
            &[
                ("document", Slot::Text(&document)),
                ("event_type", Slot::Text(&self.event_type)),
                ("trigger", Slot::Text(&trigger)),
            ],
        );
        if self.scaffold.is_none() {
            query.push_str("\n\n");
            query.push_str(&t.answer_format);
        }
        blocks.push((BlockKind::Query, query));
        blocks
    }

    fn into_bundle(self, trims: Vec<TrimAction>) -> PromptBundle {
        let blocks = self.render();
        let user_text = blocks.iter().map(|(_, b)| b.as_str()).collect::<Vec<_>>().join("\n\n");
        let system_text = self.templates.system.clone();
        let token_estimate = count_tokens(&format!("{system_text}{user_text}"));
        PromptBundle { system_text, user_text, blocks, token_estimate, strategy: self.strategy, trims, parts: self }
    }

    fn char_count(&self) -> usize {
        let blocks = self.render();
        let separators = 2 * blocks.len().saturating_sub(1);
        self.templates.system.chars().count()
            + separators
            + blocks.iter().map(|(_, b)| b.chars().count()).sum::<usize>()
    }
}

#[derive(Clone, Copy)]
enum Truncatable {
    Reasoning,
    Document,
}

impl Truncatable {
    fn state(self, parts: &mut PromptParts) -> Option<(&mut Option<usize>, usize)> {
        match self {
            Truncatable::Reasoning => parts
                .exemplar
                .as_mut()
                .map(|ex| (&mut ex.reasoning_kept, ex.demo.worked_reasoning.chars().count())),
            Truncatable::Document => {
                let len = parts.document.chars().count();
                Some((&mut parts.document_kept, len))
            }
        }
    }
}

/// Cuts the field from the end until the prompt fits or the field is empty.
/// Returns the kept length when anything was cut.
fn shrink(parts: &mut PromptParts, limit_chars: usize, field: Truncatable) -> Option<usize> {
    let suffix_len = TRUNCATION_SUFFIX.chars().count();
    let mut changed = false;
    loop {
        let total = parts.char_count();
        if total <= limit_chars {
            break;
        }
        let over = total - limit_chars;
        let (kept, len) = field.state(parts)?;
        let current = kept.unwrap_or(len);
        // A text no longer than the marker cannot get shorter by truncation.
        if (kept.is_none() && len <= suffix_len) || (kept.is_some() && current == 0) {
            break;
        }
        *kept = Some(current.saturating_sub(over));
        changed = true;
    }
    if changed {
        field.state(parts).and_then(|(kept, _)| *kept)
    } else {
        None
    }
}

/// Brings `bundle` within `budget` by, in order: truncating the exemplar's
/// reasoning, dropping heuristic rules from the last, dropping the exemplar,
/// and truncating the query document. Each step only goes as far as needed.
/// Bundles already within budget are returned unchanged.
pub fn trim_to_budget(bundle: &PromptBundle, budget: &TokenBudget) -> Result<PromptBundle, PromptError> {
    let available = budget.available();
    if bundle.token_estimate <= available {
        return Ok(bundle.clone());
    }
    let limit = available * 4;
    let mut parts = bundle.parts.clone();
    let mut trims = bundle.trims.clone();

    if let Some(kept_chars) = shrink(&mut parts, limit, Truncatable::Reasoning) {
        trims.push(TrimAction::ReasoningTruncated { kept_chars });
    }
    while parts.char_count() > limit {
        let Some(rule) = parts.rules.pop() else { break };
        trims.push(TrimAction::RuleDropped { rule_id: rule.rule_id });
    }
    if parts.char_count() > limit && parts.exemplar.take().is_some() {
        trims.push(TrimAction::ExemplarDropped);
    }
    if let Some(kept_chars) = shrink(&mut parts, limit, Truncatable::Document) {
        trims.push(TrimAction::QueryTruncated { kept_chars });
    }

    let trimmed = parts.into_bundle(trims);
    if trimmed.token_estimate > available {
        return Err(PromptError::Budget { needed: trimmed.token_estimate, available });
    }
    Ok(trimmed)
}

/// Assembles prompts from a template set and a role ontology.
#[derive(Debug, Clone)]
pub struct PromptBuilder {
    templates: Arc<TemplateSet>,
    ontology: Ontology,
}

impl PromptBuilder {
    pub fn new(templates: TemplateSet, ontology: Ontology) -> Self {
        PromptBuilder { templates: Arc::new(templates), ontology }
    }

    /// Built-in `v1` templates with the shipped ontology.
    pub fn builtin() -> Self {
        Self::new(TemplateSet::builtin("v1").expect("embedded v1 templates"), Ontology::builtin())
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn build_definition_block(&self, event_type: &str) -> DefinitionBlock {
        let ontology_roles = self.ontology.roles(event_type).map(<[_]>::to_vec).unwrap_or_default();
        let fallback = ontology_roles
            .is_empty()
            .then(|| fill(&self.templates.roles_fallback, &[("event_type", Slot::Text(event_type))]));
        DefinitionBlock {
            event_type: event_type.to_string(),
            event_definition: self.templates.event_definition.clone(),
            terminology: self.templates.terminology.clone(),
            ontology_roles,
            fallback,
        }
    }

    pub fn render_definition_block(&self, block: &DefinitionBlock) -> String {
        let terminology = block
            .terminology
            .iter()
            .map(|(term, def)| format!("- {term}: {def}"))
            .collect::<Vec<_>>()
            .join("\n");
        let roles = match &block.fallback {
            Some(sentence) => sentence.clone(),
            None => block
                .ontology_roles
                .iter()
                .map(|(role, desc)| format!("- {role}: {desc}"))
                .collect::<Vec<_>>()
                .join("\n"),
        };
        fill(
            &self.templates.definitions,
            &[
                ("event_definition", Slot::Raw(&block.event_definition)),
                ("terminology", Slot::Text(&terminology)),
                ("event_type", Slot::Text(&block.event_type)),
                ("roles", Slot::Text(&roles)),
            ],
        )
    }

    /// Full rule set for `dhp`; the baselines use none.
    pub fn build_heuristic_rules(&self, strategy: Strategy) -> Vec<HeuristicRule> {
        match strategy {
            Strategy::Dhp => self.templates.heuristic_rules.clone(),
            Strategy::Cot | Strategy::Standard => Vec::new(),
        }
    }

    /// Three-stage reasoning instructions ending with the answer format.
    /// Stages refer to the trigger, or to the event type when there is none.
    pub fn build_cot_scaffold(&self, trigger: Option<&str>, event_type: &str) -> String {
        let anchor = match trigger {
            Some(t) => format!("the trigger \"{t}\""),
            None => format!("the event type \"{event_type}\""),
        };
        fill(
            &self.templates.cot_scaffold,
            &[
                ("anchor", Slot::Text(&anchor)),
                ("event_type", Slot::Text(event_type)),
                ("answer_format", Slot::Raw(&self.templates.answer_format)),
            ],
        )
    }

    /// Assembles the prompt for one `(document, event)` query and trims it to
    /// `budget` when needed. `exemplar` is ignored by the standard strategy.
    pub fn assemble_prompt(
        &self,
        doc: &Document,
        event: &GoldEvent,
        strategy: Strategy,
        exemplar: Option<&ExemplarDemo>,
        budget: &TokenBudget,
    ) -> Result<PromptBundle, PromptError> {
        let trigger = doc.trigger_text(event);
        let uses_scaffold = strategy != Strategy::Standard;
        let parts = PromptParts {
            templates: Arc::clone(&self.templates),
            strategy,
            definitions: (strategy == Strategy::Dhp)
                .then(|| self.render_definition_block(&self.build_definition_block(&event.event_type))),
            rules: self.build_heuristic_rules(strategy),
            exemplar: exemplar
                .filter(|_| uses_scaffold)
                .map(|demo| ExemplarParts { demo: demo.clone(), reasoning_kept: None }),
            scaffold: uses_scaffold.then(|| self.build_cot_scaffold(trigger.as_deref(), &event.event_type)),
            document: doc.text(),
            document_kept: None,
            event_type: event.event_type.clone(),
            trigger,
        };
        let bundle = parts.into_bundle(Vec::new());
        trim_to_budget(&bundle, budget)
    }
}
