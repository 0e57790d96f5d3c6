use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::search::{cosine_similarity, top_k};
use super::{Chunk, ChunkId, KbError, RetrievalResult};
use crate::config_model::Span;
use crate::digest::sha256_hex;
use crate::llm_provider::EmbeddingProvider;
use crate::par::Execution;

pub const STORE_FORMAT: &str = "ransec-knowledge-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkSource {
    #[default]
    Spec,
    Feedback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedChunk {
    pub chunk: Chunk,
    pub vector: Vec<f32>,
    pub embedder_id: String,
    pub source: ChunkSource,
    /// Set when the source document disappeared; stale chunks are never retrieved.
    pub stale: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dimension: usize,
    embedder_id: String,
    count: usize,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct Record {
    filename: String,
    ordinal: usize,
    char_range: [usize; 2],
    text: String,
    /// Little-endian f32 components, base64.
    vector: String,
    source: ChunkSource,
    stale: bool,
}

fn encode_vector(v: &[f32]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    B64.encode(bytes)
}

fn decode_vector(s: &str, dimension: usize) -> Result<Vec<f32>, KbError> {
    let bytes = B64.decode(s).map_err(|e| KbError::CorruptStore(format!("vector encoding: {e}")))?;
    if bytes.len() != dimension * 4 {
        return Err(KbError::CorruptStore(format!("vector has {} bytes, expected {}", bytes.len(), dimension * 4)));
    }
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
}

/// In-memory vector store with exhaustive cosine search.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeStore {
    dimension: usize,
    embedder_id: String,
    entries: BTreeMap<ChunkId, EmbeddedChunk>,
}

impl KnowledgeStore {
    pub fn new(dimension: usize, embedder_id: impl Into<String>) -> Self {
        Self { dimension, embedder_id: embedder_id.into(), entries: BTreeMap::new() }
    }

    pub fn for_provider(provider: &dyn EmbeddingProvider) -> Self {
        Self::new(provider.dimension(), provider.embedder_id())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries eligible for retrieval.
    pub fn live_len(&self) -> usize {
        self.entries.values().filter(|e| !e.stale).count()
    }

    pub fn entries(&self) -> impl Iterator<Item = &EmbeddedChunk> {
        self.entries.values()
    }

    pub fn get(&self, id: &ChunkId) -> Option<&EmbeddedChunk> {
        self.entries.get(id)
    }

    pub fn filenames(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.entries.keys().map(|k| k.filename.as_str()).collect();
        names.dedup();
        names
    }

    fn check_entry(&self, e: &EmbeddedChunk) -> Result<(), KbError> {
        if e.embedder_id != self.embedder_id {
            return Err(KbError::EmbedderMismatch { expected: self.embedder_id.clone(), found: e.embedder_id.clone() });
        }
        if e.vector.len() != self.dimension {
            return Err(KbError::DimensionMismatch(self.dimension, e.vector.len()));
        }
        if e.vector.iter().any(|x| !x.is_finite()) {
            return Err(KbError::NonFiniteVector(e.chunk.chunk_id.to_string()));
        }
        Ok(())
    }

    /// Replaces every chunk of the files present in `entries`. All entries are
    /// validated before the store is touched.
    pub fn upsert_documents(&mut self, entries: Vec<EmbeddedChunk>) -> Result<usize, KbError> {
        for e in &entries {
            self.check_entry(e)?;
        }
        let mut files: Vec<&str> = entries.iter().map(|e| e.chunk.chunk_id.filename.as_str()).collect();
        files.sort_unstable();
        files.dedup();
        let files: Vec<String> = files.into_iter().map(String::from).collect();
        self.entries.retain(|id, _| !files.contains(&id.filename));
        let n = entries.len();
        for e in entries {
            self.entries.insert(e.chunk.chunk_id.clone(), e);
        }
        Ok(n)
    }

    /// Soft-deletes every chunk of `filename`. Returns how many chunks changed.
    pub fn mark_stale(&mut self, filename: &str) -> usize {
        let mut n = 0;
        for (id, e) in self.entries.iter_mut() {
            if id.filename == filename && !e.stale {
                e.stale = true;
                n += 1;
            }
        }
        n
    }

    /// Top-k live chunks by cosine similarity to `query`, ties broken by chunk id.
    pub fn search(
        &self,
        query: &str,
        k: usize,
        provider: &dyn EmbeddingProvider,
        exec: Execution,
    ) -> Result<Vec<RetrievalResult>, KbError> {
        if provider.embedder_id() != self.embedder_id {
            return Err(KbError::EmbedderMismatch {
                expected: self.embedder_id.clone(),
                found: provider.embedder_id().to_string(),
            });
        }
        if k == 0 {
            return Err(KbError::InvalidK);
        }
        if self.live_len() == 0 {
            return Err(KbError::EmptyStore);
        }
        let vectors = crate::llm_provider::embed_checked(provider, &[query.to_string()])?;
        self.search_vector(&vectors[0], k, exec)
    }

    pub fn search_vector(&self, query: &[f32], k: usize, exec: Execution) -> Result<Vec<RetrievalResult>, KbError> {
        if k == 0 {
            return Err(KbError::InvalidK);
        }
        if query.len() != self.dimension {
            return Err(KbError::DimensionMismatch(self.dimension, query.len()));
        }
        let live: Vec<&EmbeddedChunk> = self.entries.values().filter(|e| !e.stale).collect();
        if live.is_empty() {
            return Err(KbError::EmptyStore);
        }
        // Validate the query once so per-entry errors can only come from entries.
        if query.iter().all(|x| *x == 0.0) {
            return Err(KbError::ZeroVector);
        }
        let scores: Vec<f64> = crate::par::map_collect(&live, exec, |e| {
            cosine_similarity(query, &e.vector).unwrap_or(0.0)
        });
        let picked = top_k(&scores, |i| &live[i].chunk.chunk_id, k, exec);
        Ok(picked
            .into_iter()
            .enumerate()
            .map(|(rank, i)| RetrievalResult {
                chunk: live[i].chunk.clone(),
                cosine_score: scores[i],
                rerank_score: scores[i],
                rank: rank + 1,
                source: live[i].source,
            })
            .collect())
    }

    fn record_lines(&self) -> Vec<String> {
        self.entries
            .values()
            .map(|e| {
                serde_json::to_string(&Record {
                    filename: e.chunk.chunk_id.filename.clone(),
                    ordinal: e.chunk.chunk_id.ordinal,
                    char_range: [e.chunk.char_range.start, e.chunk.char_range.end],
                    text: e.chunk.text.clone(),
                    vector: encode_vector(&e.vector),
                    source: e.source,
                    stale: e.stale,
                })
                .expect("record serializes")
            })
            .collect()
    }

    /// Header line then one record per chunk in chunk-id order.
    pub fn to_jsonl(&self) -> String {
        let records = self.record_lines();
        let mut body = String::new();
        for r in &records {
            body.push_str(r);
            body.push('\n');
        }
        let header = Header {
            format: STORE_FORMAT.into(),
            version: STORE_VERSION,
            dimension: self.dimension,
            embedder_id: self.embedder_id.clone(),
            count: records.len(),
            checksum: sha256_hex(&body),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        out.push_str(&body);
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, KbError> {
        let mut lines = text.split_inclusive('\n');
        let header_line = lines.next().ok_or_else(|| KbError::CorruptStore("missing header".into()))?;
        let header: Header = serde_json::from_str(header_line.trim_end())
            .map_err(|e| KbError::CorruptStore(format!("header: {e}")))?;
        if header.format != STORE_FORMAT {
            return Err(KbError::CorruptStore(format!("unknown format {:?}", header.format)));
        }
        if header.version != STORE_VERSION {
            return Err(KbError::VersionMismatch { expected: STORE_VERSION, found: header.version });
        }
        let body: Vec<&str> = lines.collect();
        if body.len() != header.count {
            return Err(KbError::CorruptStore(format!("expected {} records, found {}", header.count, body.len())));
        }
        if sha256_hex(body.concat()) != header.checksum {
            return Err(KbError::CorruptStore("checksum mismatch".into()));
        }
        let mut store = Self::new(header.dimension, header.embedder_id);
        for (i, line) in body.iter().enumerate() {
            let r: Record = serde_json::from_str(line.trim_end())
                .map_err(|e| KbError::CorruptStore(format!("record {}: {e}", i + 1)))?;
            let chunk = Chunk {
                chunk_id: ChunkId::new(r.filename, r.ordinal),
                text: r.text,
                char_range: Span::new(r.char_range[0], r.char_range[1].max(r.char_range[0])),
            };
            let entry = EmbeddedChunk {
                vector: decode_vector(&r.vector, store.dimension)?,
                chunk,
                embedder_id: store.embedder_id.clone(),
                source: r.source,
                stale: r.stale,
            };
            store.entries.insert(entry.chunk.chunk_id.clone(), entry);
        }
        Ok(store)
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| KbError::io(&tmp, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| KbError::io(&tmp, e))?;
        f.sync_all().map_err(|e| KbError::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| KbError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let text = std::fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(file: &str, ordinal: usize, v: Vec<f32>) -> EmbeddedChunk {
        EmbeddedChunk {
            chunk: Chunk { chunk_id: ChunkId::new(file, ordinal), text: format!("{file} {ordinal}"), char_range: Span::new(0, 3) },
            vector: v,
            embedder_id: "e".into(),
            source: ChunkSource::Spec,
            stale: false,
        }
    }

    fn store() -> KnowledgeStore {
        let mut s = KnowledgeStore::new(2, "e");
        s.upsert_documents(vec![
            entry("a.md", 0, vec![1.0, 0.0]),
            entry("a.md", 1, vec![0.0, 1.0]),
            entry("b.md", 0, vec![0.6, 0.8]),
        ])
        .unwrap();
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let mut s = store();
        s.upsert_documents(vec![entry("c.md", 0, vec![0.1f32.sqrt(), f32::MIN_POSITIVE])]).unwrap();
        s.mark_stale("b.md");
        let text = s.to_jsonl();
        let back = KnowledgeStore::from_jsonl(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn empty_store_round_trip() {
        let s = KnowledgeStore::new(4, "e");
        let back = KnowledgeStore::from_jsonl(&s.to_jsonl()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dimension(), 4);
    }

    #[test]
    fn corruption_detected() {
        let text = store().to_jsonl();
        let truncated = &text[..text.len() - 20];
        assert!(matches!(KnowledgeStore::from_jsonl(truncated), Err(KbError::CorruptStore(_))));
        let dropped: String = text.split_inclusive('\n').take(2).collect();
        assert!(matches!(KnowledgeStore::from_jsonl(&dropped), Err(KbError::CorruptStore(_))));
        assert!(matches!(KnowledgeStore::from_jsonl(""), Err(KbError::CorruptStore(_))));
        let edited = text.replace("\"a.md 1\"", "\"a.md 2\"");
        assert!(matches!(KnowledgeStore::from_jsonl(&edited), Err(KbError::CorruptStore(_))));
        let v2 = text.replacen("\"version\":1", "\"version\":2", 1);
        assert_eq!(KnowledgeStore::from_jsonl(&v2).unwrap_err(), KbError::VersionMismatch { expected: 1, found: 2 });
    }

    #[test]
    fn search_orders_and_skips_stale() {
        let mut s = store();
        let r = s.search_vector(&[1.0, 0.0], 10, Execution::Sequential).unwrap();
        let ids: Vec<String> = r.iter().map(|x| x.chunk.chunk_id.to_string()).collect();
        assert_eq!(ids, ["a.md#0", "b.md#0", "a.md#1"]);
        assert_eq!(r.iter().map(|x| x.rank).collect::<Vec<_>>(), [1, 2, 3]);
        s.mark_stale("a.md");
        let r = s.search_vector(&[1.0, 0.0], 10, Execution::Parallel).unwrap();
        assert_eq!(r.len(), 1);
        s.mark_stale("b.md");
        assert_eq!(s.search_vector(&[1.0, 0.0], 1, Execution::Sequential).unwrap_err(), KbError::EmptyStore);
    }

    #[test]
    fn upsert_replaces_whole_document_and_validates() {
        let mut s = store();
        s.upsert_documents(vec![entry("a.md", 0, vec![1.0, 0.0])]).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.upsert_documents(vec![entry("z.md", 0, vec![1.0])]).is_err());
        assert!(s.upsert_documents(vec![entry("z.md", 0, vec![f32::NAN, 0.0])]).is_err());
        assert_eq!(s.len(), 2);
        assert_eq!(s.filenames(), ["a.md", "b.md"]);
    }

    #[test]
    fn bad_queries() {
        let s = store();
        assert_eq!(s.search_vector(&[0.0, 0.0], 1, Execution::Sequential).unwrap_err(), KbError::ZeroVector);
        assert_eq!(s.search_vector(&[1.0, 0.0], 0, Execution::Sequential).unwrap_err(), KbError::InvalidK);
    }
}
