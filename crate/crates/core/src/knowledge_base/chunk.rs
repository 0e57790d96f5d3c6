use std::fmt;

use serde::{Deserialize, Serialize};

use super::{KbError, SpecDocument};
use crate::config_model::Span;

pub const DEFAULT_MAX_CHARS: usize = 1000;
pub const DEFAULT_OVERLAP_CHARS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChunkId {
    pub filename: String,
    pub ordinal: usize,
}

impl ChunkId {
    pub fn new(filename: impl Into<String>, ordinal: usize) -> Self {
        Self { filename: filename.into(), ordinal }
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.filename, self.ordinal)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: ChunkId,
    pub text: String,
    /// Byte range of `text` within the cleaned document content.
    pub char_range: Span,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Boundary {
    Whitespace,
    Sentence,
    Paragraph,
}

/// Strongest boundary that a chunk may end on just before char index `i`.
fn boundary_before(chars: &[char], i: usize) -> Option<Boundary> {
    if i < 1 || i > chars.len() {
        return None;
    }
    let prev = chars[i - 1];
    if i >= 2 && prev == '\n' && chars[i - 2] == '\n' {
        return Some(Boundary::Paragraph);
    }
    if prev.is_whitespace() && i >= 2 && matches!(chars[i - 2], '.' | '!' | '?') {
        return Some(Boundary::Sentence);
    }
    if prev.is_whitespace() {
        return Some(Boundary::Whitespace);
    }
    None
}

/// Splits cleaned content into chunks of at most `max_chars` characters.
///
/// A chunk ends at the last paragraph break in `[max_chars/2, max_chars]`,
/// else the last sentence end, else the last whitespace, else exactly at
/// `max_chars`. The next chunk starts `overlap_chars` before that end.
pub fn chunk_text(doc: &SpecDocument, max_chars: usize, overlap_chars: usize) -> Result<Vec<Chunk>, KbError> {
    if max_chars == 0 || overlap_chars >= max_chars {
        return Err(KbError::InvalidChunkParams { max_chars, overlap_chars });
    }
    let content = &doc.content;
    let chars: Vec<char> = content.chars().collect();
    let mut byte_at: Vec<usize> = content.char_indices().map(|(b, _)| b).collect();
    byte_at.push(content.len());
    let n = chars.len();

    let mut chunks = Vec::new();
    let mut start = 0;
    while start < n {
        let end = if n - start <= max_chars {
            n
        } else {
            let limit = start + max_chars;
            let lo = (start + max_chars / 2).max(start + 1);
            let mut best: Option<(Boundary, usize)> = None;
            for i in (lo..=limit).rev() {
                if let Some(b) = boundary_before(&chars, i) {
                    if best.is_none_or(|(kind, _)| b > kind) {
                        best = Some((b, i));
                    }
                    if b == Boundary::Paragraph {
                        break;
                    }
                }
            }
            best.map(|(_, i)| i).unwrap_or(limit)
        };
        chunks.push(Chunk {
            chunk_id: ChunkId::new(doc.filename.clone(), chunks.len()),
            text: content[byte_at[start]..byte_at[end]].to_string(),
            char_range: Span::new(byte_at[start], byte_at[end]),
        });
        if end == n {
            break;
        }
        start = end.saturating_sub(overlap_chars).max(start + 1);
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge_base::extract;

    fn doc(text: &str) -> SpecDocument {
        extract(text, "d.md").unwrap()
    }

    /// Concatenates chunks, dropping each chunk's overlap with its predecessor.
    fn reassemble(chunks: &[Chunk]) -> String {
        let mut out = String::new();
        let mut covered = 0;
        for c in chunks {
            let skip = covered - c.char_range.start;
            out.push_str(&c.text[skip..]);
            covered = c.char_range.end;
        }
        out
    }

    #[test]
    fn short_document_is_one_chunk() {
        let d = doc(&"x".repeat(500));
        let chunks = chunk_text(&d, 1000, 100).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, d.content);
    }

    #[test]
    fn long_document_three_chunks_with_coverage() {
        let sentence = "The gNB shall support integrity protection. ";
        let text: String = sentence.repeat(2500 / sentence.len() + 1)[..2500].to_string();
        let d = doc(&text);
        let chunks = chunk_text(&d, 1000, 100).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(reassemble(&chunks), d.content);
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.chunk_id.ordinal, i);
            assert!(c.text.chars().count() <= 1000);
            assert!(c.text.ends_with(". ") || i == chunks.len() - 1);
        }
        for w in chunks.windows(2) {
            assert_eq!(w[0].char_range.end - w[1].char_range.start, 100);
        }
    }

    #[test]
    fn paragraph_break_preferred_over_sentence() {
        let mut text = "a. ".repeat(200);
        text.push_str("\n\n");
        text.push_str(&"b. ".repeat(200));
        let d = doc(&text);
        let chunks = chunk_text(&d, 1000, 100).unwrap();
        assert!(chunks[0].text.ends_with("\n\n"));
        assert_eq!(reassemble(&chunks), d.content);
    }

    #[test]
    fn unbroken_text_is_hard_cut() {
        let d = doc(&"z".repeat(2100));
        let chunks = chunk_text(&d, 1000, 100).unwrap();
        assert_eq!(chunks[0].text.len(), 1000);
        assert_eq!(reassemble(&chunks), d.content);
    }

    #[test]
    fn multibyte_text_respects_char_limits() {
        let d = doc(&"é".repeat(1500));
        let chunks = chunk_text(&d, 1000, 100).unwrap();
        assert!(chunks.iter().all(|c| c.text.chars().count() <= 1000));
        assert_eq!(reassemble(&chunks), d.content);
    }

    #[test]
    fn invalid_parameters() {
        let d = doc("abc");
        assert!(chunk_text(&d, 100, 100).is_err());
        assert!(chunk_text(&d, 0, 0).is_err());
        assert_eq!(chunk_text(&d, 1, 0).unwrap().len(), 3);
    }
}
