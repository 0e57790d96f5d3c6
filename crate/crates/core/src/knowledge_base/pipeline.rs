use std::path::Path;

use serde::Serialize;

use super::{
    chunk_text, clean, extract, Chunk, ChunkSource, CleanOptions, EmbeddedChunk, KbError, KnowledgeStore, SpecDocument,
    DEFAULT_MAX_CHARS, DEFAULT_OVERLAP_CHARS,
};
use crate::llm_provider::{embed_checked, EmbeddingProvider};
use crate::par::{self, Execution};

#[derive(Clone, Debug)]
pub struct IngestOptions {
    pub max_chars: usize,
    pub overlap_chars: usize,
    pub batch_size: usize,
    pub execution: Execution,
    pub clean: CleanOptions,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            max_chars: DEFAULT_MAX_CHARS,
            overlap_chars: DEFAULT_OVERLAP_CHARS,
            batch_size: 64,
            execution: Execution::default(),
            clean: CleanOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub chunks: usize,
    /// Files that could not be read or were empty, with the reason.
    pub skipped: Vec<(String, String)>,
}

fn normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    true
}

/// Embeds chunks in batches of `batch_size` (batches run concurrently under
/// `Execution::Parallel`) and L2-normalizes every vector.
pub fn embed_chunks(
    chunks: Vec<Chunk>,
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
    exec: Execution,
    source: ChunkSource,
) -> Result<Vec<EmbeddedChunk>, KbError> {
    if chunks.is_empty() {
        return Ok(Vec::new());
    }
    let batches: Vec<Vec<String>> = chunks.chunks(batch_size.max(1)).map(|b| b.iter().map(|c| c.text.clone()).collect()).collect();
    let embedded = par::map_collect(&batches, exec, |texts| embed_checked(provider, texts));
    let mut vectors = Vec::with_capacity(chunks.len());
    for batch in embedded {
        vectors.extend(batch?);
    }
    chunks
        .into_iter()
        .zip(vectors)
        .map(|(chunk, mut vector)| {
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(KbError::NonFiniteVector(chunk.chunk_id.to_string()));
            }
            if !normalize(&mut vector) {
                return Err(KbError::ZeroVector);
            }
            Ok(EmbeddedChunk { chunk, vector, embedder_id: provider.embedder_id().to_string(), source, stale: false })
        })
        .collect()
}

/// Extracts every `.txt` / `.md` file directly inside `dir`, in filename order.
pub fn load_corpus_dir(dir: &Path) -> Result<(Vec<SpecDocument>, Vec<(String, String)>), KbError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| KbError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(p.extension().and_then(|x| x.to_str()), Some("txt" | "md")))
        .collect();
    paths.sort();
    let mut docs = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        let filename = path.file_name().unwrap().to_string_lossy().into_owned();
        match std::fs::read_to_string(&path) {
            Ok(raw) => match extract(&raw, &filename) {
                Ok(mut doc) => {
                    doc.source_path_or_url = path.display().to_string();
                    docs.push(doc);
                }
                Err(e) => skipped.push((filename, e.to_string())),
            },
            Err(e) => skipped.push((filename, e.to_string())),
        }
    }
    Ok((docs, skipped))
}

impl KnowledgeStore {
    /// Cleans, chunks and embeds `docs`, then swaps their chunks into the store
    /// in one step. Nothing changes if any document fails.
    pub fn ingest_documents(
        &mut self,
        docs: &[SpecDocument],
        provider: &dyn EmbeddingProvider,
        options: &IngestOptions,
        source: ChunkSource,
    ) -> Result<IngestSummary, KbError> {
        if provider.embedder_id() != self.embedder_id() {
            return Err(KbError::EmbedderMismatch {
                expected: self.embedder_id().to_string(),
                found: provider.embedder_id().to_string(),
            });
        }
        if provider.dimension() != self.dimension() {
            return Err(KbError::DimensionMismatch(self.dimension(), provider.dimension()));
        }
        let mut chunks = Vec::new();
        let mut documents = 0;
        for doc in docs {
            let cleaned = clean(doc, &options.clean);
            let doc_chunks = chunk_text(&cleaned, options.max_chars, options.overlap_chars)?;
            if !doc_chunks.is_empty() {
                documents += 1;
            }
            chunks.extend(doc_chunks);
        }
        let embedded = embed_chunks(chunks, provider, options.batch_size, options.execution, source)?;
        let n = self.upsert_documents(embedded)?;
        tracing::info!(documents, chunks = n, "ingested documents");
        Ok(IngestSummary { documents, chunks: n, skipped: Vec::new() })
    }

    pub fn ingest_dir(
        &mut self,
        dir: &Path,
        provider: &dyn EmbeddingProvider,
        options: &IngestOptions,
    ) -> Result<IngestSummary, KbError> {
        let (docs, skipped) = load_corpus_dir(dir)?;
        let mut summary = self.ingest_documents(&docs, provider, options, ChunkSource::Spec)?;
        summary.skipped = skipped;
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_provider::MockEmbedder;

    #[test]
    fn vectors_are_unit_norm_and_deterministic() {
        let e = MockEmbedder::default();
        let doc = extract(&"Integrity protection shall use NIA2. ".repeat(80), "x.md").unwrap();
        let chunks = chunk_text(&doc, 1000, 100).unwrap();
        let a = embed_chunks(chunks.clone(), &e, 2, Execution::Parallel, ChunkSource::Spec).unwrap();
        let b = embed_chunks(chunks, &e, 64, Execution::Sequential, ChunkSource::Spec).unwrap();
        assert_eq!(a, b);
        for c in &a {
            let norm: f64 = c.vector.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn punctuation_only_chunk_is_rejected() {
        let doc = extract("--- ... ---", "p.md").unwrap();
        let chunks = chunk_text(&doc, 1000, 100).unwrap();
        assert_eq!(embed_chunks(chunks, &MockEmbedder::default(), 8, Execution::Sequential, ChunkSource::Spec).unwrap_err(), KbError::ZeroVector);
    }

    #[test]
    fn ingest_dir_and_self_retrieval() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.md"), "The gNB shall not use NEA0 for ciphering.\n").unwrap();
        std::fs::write(dir.path().join("b.txt"), "Logging levels are operator choice.\n").unwrap();
        std::fs::write(dir.path().join("empty.md"), "\n\n").unwrap();
        std::fs::write(dir.path().join("ignored.pdf"), "x").unwrap();
        let e = MockEmbedder::default();
        let mut store = KnowledgeStore::for_provider(&e);
        let summary = store.ingest_dir(dir.path(), &e, &IngestOptions::default()).unwrap();
        assert_eq!(summary.documents, 2);
        assert_eq!(summary.chunks, 2);
        assert_eq!(summary.skipped.len(), 1);
        let hits = store.search("The gNB shall not use NEA0 for ciphering.\n", 1, &e, Execution::Sequential).unwrap();
        assert_eq!(hits[0].chunk.chunk_id.filename, "a.md");
        assert!((hits[0].cosine_score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn provider_must_match_store() {
        let mut store = KnowledgeStore::new(8, "other");
        let doc = extract("text", "t.md").unwrap();
        assert!(matches!(
            store.ingest_documents(&[doc], &MockEmbedder::new(8, 0), &IngestOptions::default(), ChunkSource::Spec),
            Err(KbError::EmbedderMismatch { .. })
        ));
    }
}
