//! Synthetic RAMS corpora and mock-scripted run configs.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use eae_core::llm::MockScript;
use eae_core::runner::{plan_requests, ExperimentConfig};
use serde_json::json;

/// Role name and token index in the fixed sentence of [`tokens`].
pub const ROLES: [(&str, usize, &str); 4] = [
    ("Attacker", 0, "evt089arg01attacker"),
    ("Target", 2, "evt089arg02target"),
    ("Instrument", 6, "evt089arg03instrument"),
    ("Place", 4, "evt089arg04place"),
];

pub fn tokens(i: usize) -> Vec<String> {
    ["Militia{i}", "attacked", "Convoy{i}", "in", "Town{i}", "with", "Rockets{i}", "."]
        .iter()
        .map(|t| t.replace("{i}", &i.to_string()))
        .collect()
}

pub fn doc_id(i: usize) -> String {
    format!("doc{i:02}")
}

/// Gold argument text for `role` in document `i`.
pub fn gold_text(i: usize, role: &str) -> String {
    let (_, idx, _) = ROLES.iter().find(|(r, _, _)| *r == role).unwrap();
    tokens(i)[*idx].clone()
}

/// One RAMS JSON line for document `i` with gold arguments for `roles`.
pub fn rams_line(i: usize, roles: &[&str]) -> String {
    let links: Vec<_> = roles
        .iter()
        .map(|role| {
            let (_, idx, label) = ROLES.iter().find(|(r, _, _)| r == role).unwrap();
            json!([[1, 1], [idx, idx], label])
        })
        .collect();
    json!({
        "doc_key": doc_id(i),
        "sentences": [tokens(i)],
        "evt_triggers": [[1, 1, [["conflict.attack.n/a", 1.0]]]],
        "gold_evt_links": links,
    })
    .to_string()
}

pub fn write_corpus(dir: &Path, docs: &[(usize, Vec<&str>)]) -> PathBuf {
    let path = dir.join("test.jsonl");
    let body: Vec<String> = docs.iter().map(|(i, roles)| rams_line(*i, roles)).collect();
    std::fs::write(&path, body.join("\n") + "\n").unwrap();
    path
}

pub fn config_text(n: usize, strategy: &str, extra: &str) -> String {
    format!(
        r#"output_dir = "out"
{extra}
[dataset]
name = "RAMS"
path = "test.jsonl"

[sampling]
n = {n}
seed = 7

[prompt]
strategy = "{strategy}"
token_budget = {{ max_tokens = 8192, reserve_for_completion = 512 }}

[mock]
script = "script.json"

[cache]
dir = "cache"
"#
    )
}

/// Writes config and an empty script, then fills the script with one reply
/// per document chosen by `reply(doc_id)`.
pub fn scripted_config(
    dir: &Path,
    n: usize,
    strategy: &str,
    extra: &str,
    reply: impl Fn(&str) -> String,
) -> ExperimentConfig {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, config_text(n, strategy, extra)).unwrap();
    std::fs::write(dir.join("script.json"), "{}").unwrap();
    let config = ExperimentConfig::load(&path).unwrap();
    let mut script = MockScript::default();
    for planned in plan_requests(&config).unwrap() {
        script.insert(&planned.key, reply(&planned.doc_id));
    }
    std::fs::write(dir.join("script.json"), serde_json::to_string_pretty(&script).unwrap()).unwrap();
    config
}

pub fn answers(lines: &[(&str, String)]) -> String {
    let mut s = String::from("Stage 1 - Initiation: reading the document.\nFinal Answers:\n");
    for (role, text) in lines {
        s.push_str(&format!("{role}: \"{text}\"\n"));
    }
    s
}

pub fn doc_index(doc_id: &str) -> usize {
    doc_id.trim_start_matches("doc").parse().unwrap()
}

/// Correct answers for every gold role of document `i`.
pub fn perfect(i: usize, roles: &[&str]) -> String {
    answers(&roles.iter().map(|r| (*r, gold_text(i, r))).collect::<Vec<_>>())
}

pub fn roles_by_doc(docs: &[(usize, Vec<&'static str>)]) -> BTreeMap<String, Vec<&'static str>> {
    docs.iter().map(|(i, r)| (doc_id(*i), r.clone())).collect()
}
