//! Assessment, reflection and the assess/reflect loop, plus trigger dispatch.

mod assess;
mod compliance_loop;
mod prompts;
mod query;
mod reflection;
mod report;
mod trigger;

pub use assess::{assess_compliance, reflect, AssessmentRun, RunLogEntry};
pub use compliance_loop::{run_compliance_loop, LoopError, LoopOutcome, LoopStatus};
pub use prompts::{
    build_prompts, build_query_prompt, build_reflection_prompt, config_message, ASSESSMENT_PROMPT, DEFAULT_PROMPT_BUDGET,
    QUERY_GENERATOR_PROMPT, REFLECTION_PROMPT,
};
pub use query::{generate_queries, parse_queries, retrieve_for_plan, QueryOrigin, QueryPlan, DEFAULT_MAX_QUERIES};
pub use reflection::{parse_feedback, Issue, IssueType, ReflectionFeedback};
pub use report::{parse_report, ComplianceReport, ComplianceStatus, SpecReference, Violation};
pub use trigger::{dispatch_trigger, DispatchContext, DispatchedRun, PolicyChange, Trigger, TriggerKind};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config_model::ConfigError;
use crate::knowledge_base::KbError;
use crate::llm_provider::{ChatProvider, EmbeddingProvider, ProviderError};
use crate::par::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    NoRag,
    PlainRag,
    AgenticRag,
}

impl RetrievalMode {
    pub const ALL: [RetrievalMode; 3] = [RetrievalMode::NoRag, RetrievalMode::PlainRag, RetrievalMode::AgenticRag];

    pub fn label(self) -> &'static str {
        match self {
            RetrievalMode::NoRag => "No-RAG",
            RetrievalMode::PlainRag => "RAG",
            RetrievalMode::AgenticRag => "Agentic RAG",
        }
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "norag" | "none" => Ok(RetrievalMode::NoRag),
            "rag" | "plainrag" | "plain" => Ok(RetrievalMode::PlainRag),
            "agentic" | "agenticrag" => Ok(RetrievalMode::AgenticRag),
            _ => Err(format!("unknown retrieval mode {s:?} (expected no-rag, rag or agentic)")),
        }
    }
}

/// How PlainRag mode picks its retrieval query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlainRagStrategy {
    /// One search with the configuration text itself.
    #[default]
    ConfigAsQuery,
    /// The assessment model writes the queries in a preliminary call.
    AssessorQueries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentOptions {
    /// Results per search.
    pub k: usize,
    /// Candidates reranked in PlainRag mode.
    pub rerank_top_n: usize,
    /// Results kept after merging per-query searches in AgenticRag mode.
    pub k_total: usize,
    pub max_queries: usize,
    pub max_iterations: usize,
    pub prompt_budget: usize,
    pub plain_rag_strategy: PlainRagStrategy,
    /// Adds local retrieval and parsing time to the provider latencies.
    /// Disable for bit-stable replayed timings.
    pub include_local_latency: bool,
    pub execution: Execution,
}

impl Default for AgentOptions {
    fn default() -> Self {
        Self {
            k: 8,
            rerank_top_n: 8,
            k_total: 12,
            max_queries: DEFAULT_MAX_QUERIES,
            max_iterations: 3,
            prompt_budget: DEFAULT_PROMPT_BUDGET,
            plain_rag_strategy: PlainRagStrategy::ConfigAsQuery,
            include_local_latency: true,
            execution: Execution::default(),
        }
    }
}

/// Model handles used by one assessment pipeline.
#[derive(Clone)]
pub struct Agents {
    pub assessor: Arc<dyn ChatProvider>,
    pub reflector: Arc<dyn ChatProvider>,
    pub query_generator: Arc<dyn ChatProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
}

impl Agents {
    /// Same chat model in every role.
    pub fn single(chat: Arc<dyn ChatProvider>, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self { assessor: chat.clone(), reflector: chat.clone(), query_generator: chat, embedder }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("configuration does not parse: {0}")]
    InvalidConfig(#[from] ConfigError),
    #[error("{stage} call failed: {source}")]
    Provider { stage: String, source: ProviderError },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("cannot parse assessment report: {message}")]
    ReportParse { message: String, raw_text: String },
    #[error("cannot parse reflection feedback: {message}")]
    FeedbackParse { message: String, raw_text: String },
    #[error("prompt of {chars} characters exceeds budget of {budget}")]
    PromptTooLarge { chars: usize, budget: usize },
    #[error("query generator produced no queries")]
    EmptyPlan,
    #[error("trigger rejected: {0}")]
    TriggerRejected(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parsing() {
        assert_eq!("agentic".parse::<RetrievalMode>().unwrap(), RetrievalMode::AgenticRag);
        assert_eq!("No-RAG".parse::<RetrievalMode>().unwrap(), RetrievalMode::NoRag);
        assert_eq!("rag".parse::<RetrievalMode>().unwrap(), RetrievalMode::PlainRag);
        assert!("fast".parse::<RetrievalMode>().is_err());
    }

    #[test]
    fn options_deserialize_with_defaults() {
        let o: AgentOptions = serde_json::from_str(r#"{"k": 4}"#).unwrap();
        assert_eq!(o.k, 4);
        assert_eq!(o.max_iterations, 3);
        assert_eq!(o.k_total, 12);
    }
}
