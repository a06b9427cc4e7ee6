//! Declarative experiment configuration (TOML).
//!
//! ```toml
//! output_dir = "runs/rams-dhp"
//!
//! [dataset]
//! name = "RAMS"
//! path = "data/rams/test.jsonl"
//!
//! [sampling]
//! n = 200
//! seed = 13
//!
//! [prompt]
//! strategy = "dhp"
//! token_budget = { max_tokens = 8192, reserve_for_completion = 1024 }
//!
//! [provider]
//! base_url = "https://api.example.com/v1"
//! model = "some-chat-model"
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.
//! Exactly one of `[provider]` and `[mock]` must be present.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::corpus::{Dataset, DocEeSetting};
use crate::llm::{CostCaps, ProviderConfig};
use crate::prompt::{Strategy, TokenBudget};
use crate::score::MatchMode;
use crate::sha256_hex;

pub const DEFAULT_SAMPLE_SIZE: usize = 200;
pub const DEFAULT_CACHE_DIR: &str = ".eae-cache";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    pub prompt: PromptConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub provider: Option<ProviderConfig>,
    #[serde(default)]
    pub mock: Option<MockConfig>,
    #[serde(default)]
    pub cost_caps: CostCaps,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub match_mode: MatchMode,
    pub output_dir: PathBuf,
    /// Write every assembled prompt under `prompts/`.
    #[serde(default)]
    pub save_prompts: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: Dataset,
    pub path: PathBuf,
    /// DocEE only.
    #[serde(default)]
    pub setting: Option<DocEeSetting>,
    /// Skip malformed records instead of failing.
    #[serde(default)]
    pub lenient: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    DEFAULT_SAMPLE_SIZE
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { n: DEFAULT_SAMPLE_SIZE, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    pub strategy: Strategy,
    pub token_budget: TokenBudget,
    /// 0 or 1. Defaults to 1 for `dhp` and `cot`, 0 for `standard`.
    #[serde(default)]
    pub n_examples: Option<u8>,
    #[serde(default = "default_template_version")]
    pub template_version: String,
    /// Directory with a template manifest; overrides the built-in set.
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    #[serde(default)]
    pub exemplar_path: Option<PathBuf>,
    #[serde(default)]
    pub ontology_path: Option<PathBuf>,
}

fn default_template_version() -> String {
    "v1".into()
}

impl PromptConfig {
    pub fn examples(&self) -> u8 {
        self.n_examples.unwrap_or(match self.strategy {
            Strategy::Standard => 0,
            Strategy::Dhp | Strategy::Cot => 1,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    #[serde(default)]
    pub temperature: f64,
    /// Defaults to the budget's completion reserve.
    #[serde(default)]
    pub max_completion_tokens: Option<u32>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig { temperature: 0.0, max_completion_tokens: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    /// JSON `{ "default": ..., "responses": { digest: text } }`. Without a
    /// script every request gets the default reply.
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default = "default_mock_model")]
    pub model: String,
    #[serde(default = "default_mock_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_mock_rpm")]
    pub requests_per_minute: u32,
}

fn default_mock_model() -> String {
    "mock".into()
}
fn default_mock_concurrency() -> usize {
    4
}
fn default_mock_rpm() -> u32 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_cache_dir")]
    pub dir: PathBuf,
}

fn default_true() -> bool {
    true
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from(DEFAULT_CACHE_DIR)
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig { enabled: true, dir: default_cache_dir() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunnerError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file; relative paths are rebased onto
    /// its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunnerError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut self.dataset.path);
        rebase(&mut self.output_dir);
        rebase(&mut self.cache.dir);
        for p in [&mut self.prompt.template_dir, &mut self.prompt.exemplar_path, &mut self.prompt.ontology_path]
            .into_iter()
            .flatten()
        {
            rebase(p);
        }
        if let Some(script) = self.mock.as_mut().and_then(|m| m.script.as_mut()) {
            rebase(script);
        }
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::Config(m));
        match (&self.provider, &self.mock) {
            (Some(_), Some(_)) => return bad("give either [provider] or [mock], not both".into()),
            (None, None) => return bad("one of [provider] or [mock] is required".into()),
            (Some(p), None) => p.validate().map_err(|e| RunnerError::Config(e.to_string()))?,
            (None, Some(m)) => {
                if m.max_concurrency == 0 || m.requests_per_minute == 0 {
                    return bad("mock max_concurrency and requests_per_minute must be positive".into());
                }
            }
        }
        if self.prompt.examples() > 1 {
            return bad(format!("n_examples must be 0 or 1, got {}", self.prompt.examples()));
        }
        if self.sampling.n == 0 {
            return bad("sampling.n must be positive".into());
        }
        if self.dataset.name == Dataset::Rams && self.dataset.setting.is_some() {
            return bad("dataset.setting applies to DocEE only".into());
        }
        if !(self.generation.temperature.is_finite() && self.generation.temperature >= 0.0) {
            return bad(format!("temperature {} out of range", self.generation.temperature));
        }
        if self.generation.max_completion_tokens == Some(0) {
            return bad("max_completion_tokens must be positive".into());
        }
        Ok(())
    }

    /// Provider settings, synthesised from `[mock]` when no live provider
    /// is configured.
    pub fn effective_provider(&self) -> ProviderConfig {
        match (&self.provider, &self.mock) {
            (Some(p), _) => p.clone(),
            (None, mock) => {
                let m = mock.clone().unwrap_or(MockConfig {
                    script: None,
                    model: default_mock_model(),
                    max_concurrency: default_mock_concurrency(),
                    requests_per_minute: default_mock_rpm(),
                });
                let mut p = ProviderConfig::new("mock://", m.model);
                p.max_concurrency = m.max_concurrency;
                p.requests_per_minute = m.requests_per_minute;
                p
            }
        }
    }

    pub fn max_completion_tokens(&self) -> u32 {
        self.generation.max_completion_tokens.unwrap_or_else(|| {
            match u32::try_from(self.prompt.token_budget.reserve_for_completion()) {
                Ok(0) | Err(_) => 1024,
                Ok(n) => n,
            }
        })
    }

    /// SHA-256 over the canonical JSON form. `save_prompts` and the cache
    /// location do not affect results and are left out.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("save_prompts");
            obj.remove("cache");
            obj.remove("output_dir");
        }
        sha256_hex(value.to_string().as_bytes())
    }

    pub fn setting(&self) -> Option<DocEeSetting> {
        match self.dataset.name {
            Dataset::Rams => None,
            Dataset::DocEe => Some(self.dataset.setting.unwrap_or_default()),
        }
    }
}
