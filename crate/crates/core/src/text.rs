//! Tokenization shared by the hash embedder, the lexical reranker and the
//! similarity scorer.

/// Lowercased ASCII-alphanumeric runs, in order of appearance.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}
