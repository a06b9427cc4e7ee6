//! End-to-end experiments and comparison reports.
//!
//! A run writes into its output directory:
//!
//! | file                | content                                         |
//! |---------------------|-------------------------------------------------|
//! | `config.json`       | resolved config and its digest                  |
//! | `gold.jsonl`        | the sampled gold documents                      |
//! | `predictions.jsonl` | one [`ExtractionRecord`] per queried event      |
//! | `ledger.jsonl`      | one record per paid provider response           |
//! | `report.json`       | the [`ScoreReport`]                             |
//! | `report.md`         | the report as a table                           |
//! | `manifest.json`     | the [`RunManifest`]                             |
//! | `prompts/`          | assembled prompts, when `save_prompts` is set   |
//!
//! [`ExtractionRecord`]: crate::extract::ExtractionRecord
//! [`ScoreReport`]: crate::score::ScoreReport

use std::path::{Path, PathBuf};

use thiserror::Error;

mod config;
mod report;
mod run;

pub use config::{
    CacheConfig, DatasetConfig, ExperimentConfig, GenerationConfig, MockConfig, PromptConfig, SamplingConfig,
    DEFAULT_CACHE_DIR, DEFAULT_SAMPLE_SIZE,
};
pub use report::{
    builtin_baselines, compare_reports, load_baselines, render_delta_table, render_report, BaselineLiteral, DeltaRow,
    DeltaTable, Hundredths, Metric, ReportFormat,
};
pub use run::{
    plan_requests, read_manifest, read_predictions, run_experiment, run_experiment_with, write_predictions,
    DocumentStatus, PlannedRequest, RunEnv, RunManifest, CONFIG_FILE, LEDGER_FILE, MANIFEST_FILE, PREDICTIONS_FILE,
    PROMPTS_DIR, REPORT_JSON_FILE, REPORT_MD_FILE,
};

use crate::corpus::CorpusError;
use crate::llm::LlmError;
use crate::prompt::PromptError;
use crate::score::ScoreError;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("cannot compare reports: {0}")]
    Comparison(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed record at line {line}: {reason}")]
    Record { path: PathBuf, line: usize, reason: String },
}

impl RunnerError {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        RunnerError::Io { path: path.as_ref().to_path_buf(), source }
    }

    /// Process exit status: 2 config, 3 budget, 4 data, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) | RunnerError::Comparison(_) => 2,
            RunnerError::Prompt(PromptError::Budget { .. }) => 3,
            RunnerError::Prompt(_) => 2,
            RunnerError::Llm(LlmError::BudgetExceeded(_)) => 3,
            RunnerError::Llm(LlmError::Auth { .. } | LlmError::MissingApiKey { .. } | LlmError::Config(_)) => 2,
            RunnerError::Llm(_) => 1,
            RunnerError::Corpus(_) | RunnerError::Score(_) | RunnerError::Io { .. } | RunnerError::Record { .. } => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(RunnerError::Config("x".into()).exit_code(), 2);
        assert_eq!(RunnerError::Llm(LlmError::BudgetExceeded("x".into())).exit_code(), 3);
        assert_eq!(RunnerError::Prompt(PromptError::Budget { needed: 2, available: 1 }).exit_code(), 3);
        assert_eq!(RunnerError::Corpus(CorpusError::Sample { requested: 2, available: 1 }).exit_code(), 4);
        assert_eq!(RunnerError::Llm(LlmError::Auth { status: 401 }).exit_code(), 2);
    }
}
