//! Versioned prompt templates and the role ontology.
//!
//! A template set is a directory with a `manifest.json` listing template ids,
//! file names and SHA-256 digests. The `v1` set ships inside the crate.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{HeuristicRule, PromptError};
use crate::sha256_hex;

macro_rules! embedded {
    ($($file:literal),* $(,)?) => {
        &[$(($file, include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/templates/v1/", $file)))),*]
    };
}

const V1_FILES: &[(&str, &str)] = embedded!(
    "manifest.json",
    "system.txt",
    "task_definition.txt",
    "event_definition.txt",
    "terminology.json",
    "definitions.txt",
    "roles_fallback.txt",
    "heuristics_block.txt",
    "heuristic_rules.json",
    "exemplar.txt",
    "cot_scaffold.txt",
    "answer_format.txt",
    "query.txt",
);

const DEFAULT_ONTOLOGY: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/ontology.json"));

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    file: String,
    sha256: String,
}

#[derive(Debug, Deserialize)]
struct Manifest {
    version: String,
    templates: Vec<ManifestEntry>,
}

/// Every text fragment the prompt builder needs, already digest-checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub version: String,
    pub system: String,
    pub task_definition: String,
    pub event_definition: String,
    pub terminology: Vec<(String, String)>,
    pub definitions: String,
    pub roles_fallback: String,
    pub heuristics_block: String,
    pub heuristic_rules: Vec<HeuristicRule>,
    pub exemplar: String,
    pub cot_scaffold: String,
    pub answer_format: String,
    pub query: String,
}

fn strip_final_newline(s: &str) -> String {
    s.strip_suffix('\n').unwrap_or(s).to_string()
}

impl TemplateSet {
    /// The template set compiled into the crate.
    pub fn builtin(version: &str) -> Result<Self, PromptError> {
        match version {
            "v1" => Self::from_files(|name| {
                V1_FILES
                    .iter()
                    .find(|(f, _)| *f == name)
                    .map(|(_, content)| content.to_string())
                    .ok_or_else(|| PromptError::Template(format!("{name} is not embedded")))
            }),
            other => Err(PromptError::Template(format!("no built-in template set {other:?}"))),
        }
    }

    /// Loads a template set from a directory containing `manifest.json`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        Self::from_files(|name| {
            std::fs::read_to_string(dir.join(name))
                .map_err(|e| PromptError::Template(format!("{}: {e}", dir.join(name).display())))
        })
    }

    fn from_files(read: impl Fn(&str) -> Result<String, PromptError>) -> Result<Self, PromptError> {
        let manifest: Manifest = serde_json::from_str(&read("manifest.json")?)
            .map_err(|e| PromptError::Template(format!("manifest.json: {e}")))?;
        let mut by_id = BTreeMap::new();
        for entry in &manifest.templates {
            let content = read(&entry.file)?;
            let digest = sha256_hex(content.as_bytes());
            if digest != entry.sha256 {
                return Err(PromptError::Template(format!(
                    "{} digest mismatch: manifest {} but content {}",
                    entry.file, entry.sha256, digest
                )));
            }
            by_id.insert(entry.id.as_str(), content);
        }
        let text = |id: &str| {
            by_id
                .get(id)
                .map(|s| strip_final_newline(s))
                .ok_or_else(|| PromptError::Template(format!("manifest lacks template {id:?}")))
        };
        let terminology: Vec<(String, String)> = serde_json::from_str(&text("terminology")?)
            .map_err(|e| PromptError::Template(format!("terminology: {e}")))?;
        let heuristic_rules: Vec<HeuristicRule> = serde_json::from_str(&text("heuristic_rules")?)
            .map_err(|e| PromptError::Template(format!("heuristic_rules: {e}")))?;
        let mut ids: Vec<&str> = heuristic_rules.iter().map(|r| r.rule_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(PromptError::Template("duplicate heuristic rule_id".into()));
        }
        Ok(TemplateSet {
            version: manifest.version.clone(),
            system: text("system")?,
            task_definition: text("task_definition")?,
            event_definition: text("event_definition")?,
            terminology,
            definitions: text("definitions")?,
            roles_fallback: text("roles_fallback")?,
            heuristics_block: text("heuristics_block")?,
            heuristic_rules,
            exemplar: text("exemplar")?,
            cot_scaffold: text("cot_scaffold")?,
            answer_format: text("answer_format")?,
            query: text("query")?,
        })
    }
}

/// Role inventory per event type: `(role, description)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(transparent)]
pub struct Ontology(BTreeMap<String, Vec<(String, String)>>);

impl Ontology {
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_ONTOLOGY).expect("embedded ontology is valid JSON")
    }

    pub fn from_json(json: &str) -> Result<Self, PromptError> {
        serde_json::from_str(json).map_err(|e| PromptError::Template(format!("ontology: {e}")))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Template(format!("{}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    /// Roles of `event_type`, falling back to a case-insensitive lookup.
    pub fn roles(&self, event_type: &str) -> Option<&[(String, String)]> {
        self.0
            .get(event_type)
            .or_else(|| self.0.iter().find(|(k, _)| k.eq_ignore_ascii_case(event_type)).map(|(_, v)| v))
            .map(Vec::as_slice)
    }

    pub fn role_names(&self, event_type: &str) -> Vec<String> {
        self.roles(event_type).map(|r| r.iter().map(|(name, _)| name.clone()).collect()).unwrap_or_default()
    }

    pub fn insert(&mut self, event_type: impl Into<String>, roles: Vec<(String, String)>) {
        self.0.insert(event_type.into(), roles);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_v1_loads_and_matches_manifest() {
        let set = TemplateSet::builtin("v1").unwrap();
        assert_eq!(set.version, "v1");
        assert!(!set.heuristic_rules.is_empty());
        assert!(!set.answer_format.ends_with('\n'));
    }

    #[test]
    fn directory_load_equals_builtin() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/templates/v1");
        assert_eq!(TemplateSet::from_dir(dir).unwrap(), TemplateSet::builtin("v1").unwrap());
    }

    #[test]
    fn tampered_template_is_rejected() {
        let src = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/templates/v1");
        let dir = tempfile::tempdir().unwrap();
        for entry in std::fs::read_dir(src).unwrap() {
            let entry = entry.unwrap();
            std::fs::copy(entry.path(), dir.path().join(entry.file_name())).unwrap();
        }
        std::fs::write(dir.path().join("system.txt"), "You are helpful.\n").unwrap();
        let err = TemplateSet::from_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("digest mismatch"), "{err}");
    }

    #[test]
    fn unknown_version() {
        assert!(TemplateSet::builtin("v9").is_err());
    }

    #[test]
    fn ontology_lookup_is_case_tolerant() {
        let o = Ontology::builtin();
        assert!(o.roles("conflict.attack").is_some());
        assert!(o.roles("Zz.Qq").is_none());
    }
}
