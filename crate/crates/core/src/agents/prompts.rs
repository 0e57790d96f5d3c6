use super::{AgentError, ComplianceReport, ReflectionFeedback, RetrievalMode};
use crate::knowledge_base::RetrievalResult;
use crate::llm_provider::Message;

pub const ASSESSMENT_PROMPT: &str = include_str!("../../assets/prompts/compliance_assessment.txt");
pub const REFLECTION_PROMPT: &str = include_str!("../../assets/prompts/reflection.txt");
pub const QUERY_GENERATOR_PROMPT: &str = include_str!("../../assets/prompts/query_generator.txt");

/// Default ceiling on the summed length of all message contents.
pub const DEFAULT_PROMPT_BUDGET: usize = 120_000;

fn fenced(label: &str, text: &str) -> String {
    let nl = if text.ends_with('\n') { "" } else { "\n" };
    format!("{label}\n```\n{text}{nl}```")
}

pub fn config_message(config_text: &str) -> Message {
    Message::user(fenced("Configuration file:", config_text))
}

fn knowledge_message(retrieved: &[RetrievalResult]) -> Message {
    let blocks: Vec<String> = retrieved
        .iter()
        .enumerate()
        .map(|(i, r)| format!("[{}] Filename: {}\n{}", i + 1, r.chunk.chunk_id.filename, r.chunk.text.trim_end()))
        .collect();
    Message::user(format!("Knowledge Base results:\n\n{}", blocks.join("\n\n")))
}

fn total_chars(messages: &[Message]) -> usize {
    messages.iter().map(|m| m.content.chars().count()).sum()
}

/// Assessment request: system prompt, retrieved passages in rank order, the
/// fenced configuration, then optional runtime context and prior feedback.
/// Passages are dropped from the tail until the whole request fits `budget`.
pub fn build_prompts(
    mode: RetrievalMode,
    config_text: &str,
    retrieved: &[RetrievalResult],
    feedback: Option<&ReflectionFeedback>,
    event_context: Option<&str>,
    budget: usize,
) -> Result<Vec<Message>, AgentError> {
    if mode == RetrievalMode::NoRag && !retrieved.is_empty() {
        return Err(AgentError::InvalidInput("retrieved passages supplied in NoRag mode".into()));
    }
    let mut tail = vec![config_message(config_text)];
    if let Some(ctx) = event_context {
        tail.push(Message::user(format!("Runtime security event context:\n{ctx}")));
    }
    if let Some(fb) = feedback {
        tail.push(Message::user(format!("Previous Reflection Feedback:\n{}", fb.to_json_pretty())));
    }
    let assemble = |n: usize| {
        let mut messages = vec![Message::system(ASSESSMENT_PROMPT)];
        if n > 0 {
            messages.push(knowledge_message(&retrieved[..n]));
        }
        messages.extend(tail.iter().cloned());
        messages
    };
    for n in (0..=retrieved.len()).rev() {
        let messages = assemble(n);
        if total_chars(&messages) <= budget {
            if n < retrieved.len() {
                tracing::warn!(kept = n, dropped = retrieved.len() - n, "retrieved passages truncated to fit prompt budget");
            }
            return Ok(messages);
        }
    }
    Err(AgentError::PromptTooLarge { chars: total_chars(&assemble(0)), budget })
}

pub fn build_reflection_prompt(original_config: &str, report: &ComplianceReport) -> Vec<Message> {
    let corrected = match &report.corrected_config {
        Some(c) => fenced("Corrected configuration:", c),
        None => "Corrected configuration: none".to_string(),
    };
    vec![
        Message::system(REFLECTION_PROMPT),
        Message::user(fenced("Original configuration:", original_config)),
        Message::user(format!("Compliance assessment output:\n{}", report.raw_text)),
        Message::user(corrected),
    ]
}

pub fn build_query_prompt(config_text: &str) -> Vec<Message> {
    vec![Message::system(QUERY_GENERATOR_PROMPT), config_message(config_text)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_model::Span;
    use crate::knowledge_base::{Chunk, ChunkId, ChunkSource};
    use crate::llm_provider::{fingerprint, Role};

    fn hit(file: &str, text: &str) -> RetrievalResult {
        RetrievalResult {
            chunk: Chunk { chunk_id: ChunkId::new(file, 0), text: text.into(), char_range: Span::new(0, text.len()) },
            cosine_score: 0.5,
            rerank_score: 0.5,
            rank: 1,
            source: ChunkSource::Spec,
        }
    }

    #[test]
    fn prompt_assets_are_present() {
        assert!(ASSESSMENT_PROMPT.starts_with("You are the Compliance Assessment Agent."));
        assert!(ASSESSMENT_PROMPT.ends_with("```corrected\n<entire corrected config here>\n"));
        assert!(REFLECTION_PROMPT.contains("\"MustFixSummary\""));
        assert!(REFLECTION_PROMPT.ends_with("- Be strict. No praise. No config editing.\n"));
    }

    #[test]
    fn no_rag_has_no_knowledge_block() {
        let m = build_prompts(RetrievalMode::NoRag, "a = 1;\n", &[], None, None, DEFAULT_PROMPT_BUDGET).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].role, Role::System);
        assert_eq!(m[1].content, "Configuration file:\n```\na = 1;\n```");
        assert!(build_prompts(RetrievalMode::NoRag, "a = 1;", &[hit("x", "y")], None, None, 10_000).is_err());
    }

    #[test]
    fn passages_in_rank_order_with_filenames() {
        let hits = [hit("a.md", "first"), hit("b.md", "second"), hit("c.md", "third")];
        let m = build_prompts(RetrievalMode::PlainRag, "a = 1;", &hits, None, None, DEFAULT_PROMPT_BUDGET).unwrap();
        assert_eq!(
            m[1].content,
            "Knowledge Base results:\n\n[1] Filename: a.md\nfirst\n\n[2] Filename: b.md\nsecond\n\n[3] Filename: c.md\nthird"
        );
        let again = build_prompts(RetrievalMode::PlainRag, "a = 1;", &hits, None, None, DEFAULT_PROMPT_BUDGET).unwrap();
        assert_eq!(fingerprint("m", &m), fingerprint("m", &again));
    }

    #[test]
    fn feedback_and_context_follow_config() {
        let fb = ReflectionFeedback { overall_assessment: "x".into(), issues: vec![], must_fix_summary: vec!["fix".into()] };
        let m = build_prompts(RetrievalMode::NoRag, "a = 1;", &[], Some(&fb), Some("3 failures"), DEFAULT_PROMPT_BUDGET).unwrap();
        assert_eq!(m.len(), 4);
        assert!(m[2].content.starts_with("Runtime security event context:\n3 failures"));
        assert!(m[3].content.starts_with("Previous Reflection Feedback:\n{"));
    }

    #[test]
    fn budget_truncates_passages_from_the_tail() {
        let hits = [hit("a.md", &"x".repeat(100)), hit("b.md", &"y".repeat(100))];
        let base = total_chars(&build_prompts(RetrievalMode::PlainRag, "a = 1;", &[], None, None, usize::MAX).unwrap());
        let m = build_prompts(RetrievalMode::PlainRag, "a = 1;", &hits, None, None, base + 150).unwrap();
        assert!(m[1].content.contains("a.md") && !m[1].content.contains("b.md"));
        assert!(matches!(
            build_prompts(RetrievalMode::PlainRag, "a = 1;", &hits, None, None, base - 1),
            Err(AgentError::PromptTooLarge { .. })
        ));
    }
}
