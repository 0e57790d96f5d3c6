use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Chunk, ChunkId, ChunkSource, KbError};
use crate::par::{self, Execution};
use crate::text::tokens;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub chunk: Chunk,
    pub cosine_score: f64,
    pub rerank_score: f64,
    /// 1-based.
    pub rank: usize,
    pub source: ChunkSource,
}

/// Cosine similarity accumulated in f64.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64, KbError> {
    if a.len() != b.len() {
        return Err(KbError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(KbError::ZeroVector);
    }
    Ok((dot / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// Indices of the `k` best scores, ordered by score descending then id ascending.
pub(crate) fn top_k<'a, F>(scores: &[f64], id_of: F, k: usize, exec: Execution) -> Vec<usize>
where
    F: Fn(usize) -> &'a ChunkId + Sync,
{
    let mut order: Vec<usize> = (0..scores.len()).collect();
    par::sort_by(&mut order, exec, |&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| id_of(a).cmp(id_of(b))));
    order.truncate(k);
    order
}

fn result_order(a: &RetrievalResult, b: &RetrievalResult) -> Ordering {
    b.rerank_score
        .total_cmp(&a.rerank_score)
        .then_with(|| b.cosine_score.total_cmp(&a.cosine_score))
        .then_with(|| a.chunk.chunk_id.cmp(&b.chunk.chunk_id))
}

/// Lexical rerank of the first `top_n` candidates against `context`.
///
/// Each candidate's lexical score is the sum, over distinct tokens it shares
/// with the context, of `ln(1 + N / df)` where `df` counts candidates holding
/// the token. The final score is `0.5 * cosine + 0.5 * lexical / max_lexical`.
pub fn rerank(results: &[RetrievalResult], context: &str, top_n: usize) -> Vec<RetrievalResult> {
    let candidates = &results[..top_n.min(results.len())];
    let n = candidates.len() as f64;
    let token_sets: Vec<BTreeSet<String>> = candidates.iter().map(|r| tokens(&r.chunk.text).into_iter().collect()).collect();
    let mut df: HashMap<&str, usize> = HashMap::new();
    for set in &token_sets {
        for t in set {
            *df.entry(t.as_str()).or_default() += 1;
        }
    }
    let context_tokens: BTreeSet<String> = tokens(context).into_iter().collect();
    let lexical: Vec<f64> = token_sets
        .iter()
        .map(|set| {
            set.intersection(&context_tokens)
                .map(|t| (1.0 + n / df[t.as_str()] as f64).ln())
                .sum()
        })
        .collect();
    let max_lex = lexical.iter().cloned().fold(0.0f64, f64::max);

    let mut out: Vec<RetrievalResult> = candidates
        .iter()
        .zip(&lexical)
        .map(|(r, lex)| {
            let norm = if max_lex > 0.0 { lex / max_lex } else { 0.0 };
            RetrievalResult { rerank_score: 0.5 * r.cosine_score + 0.5 * norm, ..r.clone() }
        })
        .collect();
    out.sort_by(result_order);
    for (i, r) in out.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    out
}
