use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::prompts::build_query_prompt;
use super::AgentError;
use crate::knowledge_base::{rerank, ChunkId, KbError, KnowledgeStore, RetrievalResult};
use crate::llm_provider::{ChatExchange, ChatProvider, EmbeddingProvider};
use crate::par::Execution;

pub const DEFAULT_MAX_QUERIES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryOrigin {
    QueryGeneratorAgent,
    AssessmentAgent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub queries: Vec<String>,
    pub generated_by: QueryOrigin,
}

fn strip_marker(line: &str) -> &str {
    let t = line.trim();
    let t = t.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')']) {
            if r.starts_with(char::is_whitespace) || r.is_empty() {
                return r.trim_start();
            }
        }
    }
    t
}

/// Splits at sentence ends: `.`, `!` or `?` followed by whitespace.
fn sentences(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = line.as_bytes();
    for i in 0..bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?') && bytes.get(i + 1).is_some_and(|b| b.is_ascii_whitespace()) {
            out.push(&line[start..=i]);
            start = i + 1;
        }
    }
    out.push(&line[start..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Query sentences from a generator response: one per line or per sentence,
/// list markers removed, first occurrence kept, at most `max_queries`.
pub fn parse_queries(text: &str, max_queries: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for line in text.lines() {
        for s in sentences(strip_marker(line)) {
            if out.len() == max_queries {
                return out;
            }
            if !out.iter().any(|q| q == s) {
                out.push(s.to_string());
            }
        }
    }
    out
}

/// One generator call; the plan and the exchange that produced it.
pub fn generate_queries(
    config_text: &str,
    provider: &dyn ChatProvider,
    origin: QueryOrigin,
    max_queries: usize,
) -> Result<(QueryPlan, ChatExchange), AgentError> {
    let exchange = provider
        .chat(&build_query_prompt(config_text))
        .map_err(|source| AgentError::Provider { stage: "query_generation".into(), source })?;
    let queries = parse_queries(&exchange.response_text, max_queries);
    if queries.is_empty() {
        return Err(AgentError::EmptyPlan);
    }
    Ok((QueryPlan { queries, generated_by: origin }, exchange))
}

/// One search per query, merged by chunk id keeping the best cosine score,
/// reranked against `context` and cut to `k_total`.
pub fn retrieve_for_plan(
    plan: &QueryPlan,
    store: &KnowledgeStore,
    embedder: &dyn EmbeddingProvider,
    k: usize,
    k_total: usize,
    context: &str,
    exec: Execution,
) -> Result<Vec<RetrievalResult>, KbError> {
    let mut merged: BTreeMap<ChunkId, RetrievalResult> = BTreeMap::new();
    for q in &plan.queries {
        for r in store.search(q, k, embedder, exec)? {
            match merged.get(&r.chunk.chunk_id) {
                Some(existing) if existing.cosine_score >= r.cosine_score => {}
                _ => {
                    merged.insert(r.chunk.chunk_id.clone(), r);
                }
            }
        }
    }
    let mut candidates: Vec<RetrievalResult> = merged.into_values().collect();
    candidates.sort_by(|a, b| b.cosine_score.total_cmp(&a.cosine_score).then_with(|| a.chunk.chunk_id.cmp(&b.chunk.chunk_id)));
    let n = candidates.len();
    let mut out = rerank(&candidates, context, n);
    out.truncate(k_total);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge_base::{extract, ChunkSource, IngestOptions};
    use crate::llm_provider::{MockEmbedder, ScriptedProvider};

    #[test]
    fn newline_and_period_delimited() {
        assert_eq!(parse_queries("A.\nB.\n", 8), ["A.", "B."]);
        assert_eq!(parse_queries("First one. Second one? Third", 8), ["First one.", "Second one?", "Third"]);
        assert_eq!(parse_queries("TS 33.501 clause 5.3.", 8), ["TS 33.501 clause 5.3."]);
    }

    #[test]
    fn dedup_markers_and_cap() {
        assert_eq!(parse_queries("1. A.\n- B.\n2) A.\n* C.\n", 8), ["A.", "B.", "C."]);
        let many: String = (0..20).map(|i| format!("Q{i}.\n")).collect();
        assert_eq!(parse_queries(&many, 8).len(), 8);
        assert!(parse_queries("\n  \n- \n", 8).is_empty());
    }

    #[test]
    fn empty_response_is_empty_plan() {
        let p = ScriptedProvider::sequence("m", ["\n\n"]);
        assert_eq!(generate_queries("a = 1;", &p, QueryOrigin::QueryGeneratorAgent, 8).unwrap_err(), AgentError::EmptyPlan);
        assert_eq!(p.calls(), 1);
    }

    fn store() -> (KnowledgeStore, MockEmbedder) {
        let e = MockEmbedder::default();
        let mut s = KnowledgeStore::for_provider(&e);
        let docs = [
            extract("Null ciphering nea0 must not be used.", "a.md").unwrap(),
            extract("Integrity algorithm nia0 offers no protection.", "b.md").unwrap(),
            extract("Log levels are informative.", "c.md").unwrap(),
        ];
        s.ingest_documents(&docs, &e, &IngestOptions::default(), ChunkSource::Spec).unwrap();
        (s, e)
    }

    #[test]
    fn overlapping_queries_deduplicate() {
        let (s, e) = store();
        let plan = QueryPlan { queries: vec!["nea0 ciphering".into(), "nea0 null".into()], generated_by: QueryOrigin::QueryGeneratorAgent };
        let out = retrieve_for_plan(&plan, &s, &e, 3, 12, "config", Execution::Sequential).unwrap();
        assert_eq!(out.len(), 3);
        let mut ids: Vec<_> = out.iter().map(|r| r.chunk.chunk_id.clone()).collect();
        ids.dedup();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn single_query_plan_matches_search_then_rerank() {
        let (s, e) = store();
        let plan = QueryPlan { queries: vec!["nia0 integrity".into()], generated_by: QueryOrigin::AssessmentAgent };
        let via_plan = retrieve_for_plan(&plan, &s, &e, 2, 12, "ctx nia0", Execution::Sequential).unwrap();
        let hits = s.search("nia0 integrity", 2, &e, Execution::Sequential).unwrap();
        assert_eq!(via_plan, rerank(&hits, "ctx nia0", 2));
    }
}
