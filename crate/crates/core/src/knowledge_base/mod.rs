//! Standards corpus ingestion and retrieval: extract, clean, chunk, embed,
//! store, search and rerank.

mod chunk;
mod document;
mod pipeline;
mod search;
mod store;

pub use chunk::{chunk_text, Chunk, ChunkId, DEFAULT_MAX_CHARS, DEFAULT_OVERLAP_CHARS};
pub use document::{clean, extract, extract_at, CleanOptions, SpecDocument};
pub use pipeline::{embed_chunks, load_corpus_dir, IngestOptions, IngestSummary};
pub use search::{cosine_similarity, rerank, RetrievalResult};
pub use store::{ChunkSource, EmbeddedChunk, KnowledgeStore, STORE_FORMAT, STORE_VERSION};

use thiserror::Error;

use crate::llm_provider::ProviderError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbError {
    #[error("document {0} is empty")]
    EmptyDocument(String),
    #[error("invalid chunking parameters: max_chars {max_chars}, overlap_chars {overlap_chars}")]
    InvalidChunkParams { max_chars: usize, overlap_chars: usize },
    #[error("invalid boilerplate pattern {pattern:?}: {message}")]
    InvalidPattern { pattern: String, message: String },
    #[error("zero vector")]
    ZeroVector,
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedder {found} does not match store embedder {expected}")]
    EmbedderMismatch { expected: String, found: String },
    #[error("vector for {0} contains NaN or infinite components")]
    NonFiniteVector(String),
    #[error("knowledge store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("store version {found} is not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("I/O error: {0}")]
    Io(String),
}

impl KbError {
    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        KbError::Io(format!("{}: {e}", path.display()))
    }
}
