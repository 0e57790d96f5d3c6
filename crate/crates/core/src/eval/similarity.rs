use std::collections::HashMap;
use std::sync::Arc;

use super::EvalError;
use crate::knowledge_base::cosine_similarity;
use crate::llm_provider::EmbeddingProvider;
use crate::text::tokens;

pub trait SimilarityScorer: Send + Sync {
    fn name(&self) -> String;
    /// Score in [0, 1].
    fn score(&self, candidate: &str, reference: &str) -> Result<f64, EvalError>;
}

fn check(candidate: &str, reference: &str) -> Result<(), EvalError> {
    if candidate.trim().is_empty() || reference.trim().is_empty() {
        return Err(EvalError::EmptyText);
    }
    Ok(())
}

/// F1 over the multisets of lowercase alphanumeric tokens.
pub fn token_f1(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    check(candidate, reference)?;
    let c = tokens(candidate);
    let r = tokens(reference);
    if c.is_empty() || r.is_empty() {
        return Ok(if c.is_empty() && r.is_empty() { 1.0 } else { 0.0 });
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &r {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &c {
        if let Some(n) = counts.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    Ok((2 * overlap) as f64 / (c.len() + r.len()) as f64)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TokenF1Scorer;

impl SimilarityScorer for TokenF1Scorer {
    fn name(&self) -> String {
        "token-f1".into()
    }

    fn score(&self, candidate: &str, reference: &str) -> Result<f64, EvalError> {
        token_f1(candidate, reference)
    }
}

/// Cosine of the two texts' embeddings, clamped to [0, 1].
pub struct EmbeddingCosineScorer {
    provider: Arc<dyn EmbeddingProvider>,
}

impl EmbeddingCosineScorer {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        Self { provider }
    }
}

impl SimilarityScorer for EmbeddingCosineScorer {
    fn name(&self) -> String {
        format!("embedding-cosine:{}", self.provider.embedder_id())
    }

    fn score(&self, candidate: &str, reference: &str) -> Result<f64, EvalError> {
        check(candidate, reference)?;
        let v = self
            .provider
            .embed(&[candidate.to_string(), reference.to_string()])
            .map_err(|e| EvalError::Scorer(e.to_string()))?;
        let s = cosine_similarity(&v[0], &v[1]).map_err(|e| EvalError::Scorer(e.to_string()))?;
        Ok(s.clamp(0.0, 1.0))
    }
}
