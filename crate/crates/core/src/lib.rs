//! Prompted document-level event argument extraction.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] loads RAMS / DocEE evaluation splits into a unified
//!   [`Document`] model and draws reproducible subsets.
//! * [`prompt`] assembles definition-augmented, heuristic-driven prompts
//!   (and the plain chain-of-thought and standard baselines) under a token
//!   budget.
//! * [`llm`] dispatches chat-completion requests with caching, retries,
//!   rate limiting and cost caps, and offers a scripted mock provider.
//! * [`extract`] parses model replies into argument tuples.
//! * [`score`] computes Arg-I / Arg-C micro precision, recall and F1.
//! * [`runner`] ties the above together from a declarative config and
//!   renders comparison reports.

pub mod corpus;
pub mod extract;
pub mod llm;
pub mod prompt;
pub mod runner;
pub mod score;

mod versioned;

pub use corpus::{Corpus, Dataset, DocEeSetting, Document, GoldArgument, GoldEvent, Span, SpanUnit};
pub use extract::{ExtractionRecord, ParseDiagnostics, PredictedArgument};
pub use llm::{ChatRequest, ChatResponse, ProviderConfig};
pub use prompt::{PromptBundle, Strategy, TokenBudget};
pub use runner::{ExperimentConfig, RunManifest};
pub use score::{MatchMode, ScoreCounts, ScoreReport};

/// Version tag written into every JSON Lines artifact the harness produces.
pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
