use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::prompts::{build_prompts, build_reflection_prompt};
use super::query::{generate_queries, retrieve_for_plan, QueryOrigin, QueryPlan};
use super::{
    parse_feedback, parse_report, AgentError, AgentOptions, Agents, ComplianceReport, PlainRagStrategy, ReflectionFeedback,
    RetrievalMode,
};
use crate::config_model::parse_config;
use crate::digest::duration_secs;
use crate::knowledge_base::{rerank, KbError, KnowledgeStore, RetrievalResult};
use crate::llm_provider::{ChatExchange, ChatProvider, Message, ProviderError};

/// One line of the per-run audit trail: a provider call or a notable decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub step: String,
    pub model: Option<String>,
    pub fingerprint: Option<String>,
    #[serde(with = "duration_secs")]
    pub latency: Duration,
    pub detail: String,
}

impl RunLogEntry {
    fn call(step: &str, ex: &ChatExchange) -> Self {
        Self {
            step: step.into(),
            model: Some(ex.model_name.clone()),
            fingerprint: Some(ex.fingerprint.clone()),
            latency: ex.latency,
            detail: String::new(),
        }
    }

    fn note(step: &str, detail: impl Into<String>) -> Self {
        Self { step: step.into(), model: None, fingerprint: None, latency: Duration::ZERO, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRun {
    pub report: ComplianceReport,
    pub requested_mode: RetrievalMode,
    /// Differs from `requested_mode` after a fallback.
    pub effective_mode: RetrievalMode,
    pub query_plan: Option<QueryPlan>,
    pub retrieved: Vec<RetrievalResult>,
    #[serde(with = "duration_secs")]
    pub latency: Duration,
    pub log: Vec<RunLogEntry>,
}

/// Wraps provider calls, tracking reported latency and wall time spent inside them.
struct Calls {
    reported: Duration,
    wall: Duration,
    log: Vec<RunLogEntry>,
}

impl Calls {
    fn chat(&mut self, step: &str, provider: &dyn ChatProvider, messages: &[Message]) -> Result<ChatExchange, AgentError> {
        let started = Instant::now();
        let result = provider.chat(messages);
        self.wall += started.elapsed();
        let ex = result.map_err(|source| AgentError::Provider { stage: step.into(), source })?;
        self.record(step, &ex, Duration::ZERO);
        Ok(ex)
    }

    fn record(&mut self, step: &str, ex: &ChatExchange, wall: Duration) {
        self.reported += ex.latency;
        self.wall += wall;
        self.log.push(RunLogEntry::call(step, ex));
    }
}

fn require_store(store: Option<&KnowledgeStore>) -> Result<&KnowledgeStore, AgentError> {
    store.ok_or(AgentError::Kb(KbError::EmptyStore))
}

fn config_as_query(
    agents: &Agents,
    options: &AgentOptions,
    store: &KnowledgeStore,
    config_text: &str,
) -> Result<Vec<RetrievalResult>, AgentError> {
    let hits = store.search(config_text, options.k, agents.embedder.as_ref(), options.execution)?;
    Ok(rerank(&hits, config_text, options.rerank_top_n))
}

/// Runs mode-appropriate retrieval and one assessment call, then parses the
/// report. Violation paths are qualified against the parsed configuration.
pub fn assess_compliance(
    agents: &Agents,
    options: &AgentOptions,
    mode: RetrievalMode,
    config_text: &str,
    store: Option<&KnowledgeStore>,
    feedback: Option<&ReflectionFeedback>,
    event_context: Option<&str>,
) -> Result<AssessmentRun, AgentError> {
    let started = Instant::now();
    let doc = parse_config(config_text)?;
    let mut calls = Calls { reported: Duration::ZERO, wall: Duration::ZERO, log: Vec::new() };
    let mut effective_mode = mode;
    let mut query_plan = None;

    let retrieved = match mode {
        RetrievalMode::NoRag => Vec::new(),
        RetrievalMode::PlainRag | RetrievalMode::AgenticRag => {
            let store = require_store(store)?;
            let (generator, origin, step) = match (mode, options.plain_rag_strategy) {
                (RetrievalMode::AgenticRag, _) => {
                    (Some(agents.query_generator.as_ref()), QueryOrigin::QueryGeneratorAgent, "query_generation")
                }
                (_, PlainRagStrategy::AssessorQueries) => {
                    (Some(agents.assessor.as_ref()), QueryOrigin::AssessmentAgent, "assessor_query_generation")
                }
                _ => (None, QueryOrigin::AssessmentAgent, ""),
            };
            match generator {
                None => config_as_query(agents, options, store, config_text)?,
                Some(provider) => {
                    let call_started = Instant::now();
                    match generate_queries(config_text, provider, origin, options.max_queries) {
                        Ok((plan, ex)) => {
                            calls.record(step, &ex, call_started.elapsed());
                            let hits = retrieve_for_plan(
                                &plan,
                                store,
                                agents.embedder.as_ref(),
                                options.k,
                                options.k_total,
                                config_text,
                                options.execution,
                            )?;
                            query_plan = Some(plan);
                            hits
                        }
                        Err(AgentError::EmptyPlan) => {
                            calls.wall += call_started.elapsed();
                            calls.log.push(RunLogEntry::note(
                                "fallback",
                                "query generator returned no usable sentences; using configuration-as-query retrieval",
                            ));
                            tracing::warn!("empty query plan, falling back to plain retrieval");
                            effective_mode = RetrievalMode::PlainRag;
                            config_as_query(agents, options, store, config_text)?
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
    };

    let messages = build_prompts(effective_mode, config_text, &retrieved, feedback, event_context, options.prompt_budget)?;
    let ex = calls.chat("assessment", agents.assessor.as_ref(), &messages)?;
    let mut report = parse_report(&ex.response_text)?;
    for v in &mut report.violations {
        if let Some(q) = doc.qualify(&v.config_path) {
            v.config_path = q;
        }
    }

    let mut latency = calls.reported;
    if options.include_local_latency {
        latency += started.elapsed().saturating_sub(calls.wall);
    }
    Ok(AssessmentRun {
        report,
        requested_mode: mode,
        effective_mode,
        query_plan,
        retrieved,
        latency,
        log: calls.log,
    })
}

/// One reflection call and its strictly parsed verdict.
pub fn reflect(
    original_config: &str,
    report: &ComplianceReport,
    provider: &dyn ChatProvider,
) -> Result<(ReflectionFeedback, ChatExchange), AgentError> {
    let ex = provider
        .chat(&build_reflection_prompt(original_config, report))
        .map_err(|source: ProviderError| AgentError::Provider { stage: "reflection".into(), source })?;
    let feedback = parse_feedback(&ex.response_text)?;
    Ok((feedback, ex))
}
