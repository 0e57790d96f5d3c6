//! Span-preserving model of OAI-style (libconfig-like) gNB configuration files.
//!
//! The parse tree never owns a rewritten copy of the text: every node points
//! back into the original bytes, so re-serialization is byte-exact and edits
//! can be checked for locality.

mod diff;
mod edit;
mod parser;
mod security;

pub use diff::{check_minimal_change, diff_configs, verify_minimal_change, ChangedRegion, ConfigDiff, MinimalChangeVerdict, ROOT_PATH_LABEL};
pub use edit::{apply_edits, ConfigEdit};
pub use parser::{parse_config, parse_config_bytes};
pub use security::{extract_security_profile, SecurityProfile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open byte range into a document's raw text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains_span(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NewlineStyle {
    Lf,
    CrLf,
}

impl NewlineStyle {
    pub fn as_str(&self) -> &'static str {
        match self {
            NewlineStyle::Lf => "\n",
            NewlineStyle::CrLf => "\r\n",
        }
    }

    /// Detected from the first newline; LF when the text has none.
    pub fn detect(text: &str) -> Self {
        match text.find('\n') {
            Some(i) if i > 0 && text.as_bytes()[i - 1] == b'\r' => NewlineStyle::CrLf,
            _ => NewlineStyle::Lf,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Scalar,
    List,
    Group,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigNode {
    /// Setting name, or the decimal index for list elements.
    pub name: String,
    pub kind: NodeKind,
    /// Verbatim value token for scalars (quotes and suffixes included); empty otherwise.
    pub scalar_value: String,
    pub children: Vec<ConfigNode>,
    pub value_span: Span,
    pub full_span: Span,
    /// Comment lines directly above the node, verbatim.
    pub comments: Vec<String>,
}

impl ConfigNode {
    pub fn is_container(&self) -> bool {
        matches!(self.kind, NodeKind::List | NodeKind::Group)
    }

    pub fn child(&self, name: &str) -> Option<&ConfigNode> {
        self.children.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigDocument {
    pub raw_text: String,
    pub root: Vec<ConfigNode>,
    pub newline_style: NewlineStyle,
}

impl ConfigDocument {
    /// Rebuilds the text from the tree: inter-node gaps come from the raw
    /// text, scalar values from the nodes themselves.
    pub fn serialize(&self) -> String {
        let mut out = String::with_capacity(self.raw_text.len());
        let end = self.render_children(&self.root, 0, &mut out);
        out.push_str(&self.raw_text[end..]);
        out
    }

    fn render_children(&self, nodes: &[ConfigNode], mut cursor: usize, out: &mut String) -> usize {
        for node in nodes {
            out.push_str(&self.raw_text[cursor..node.full_span.start]);
            self.render_node(node, out);
            cursor = node.full_span.end;
        }
        cursor
    }

    fn render_node(&self, node: &ConfigNode, out: &mut String) {
        out.push_str(&self.raw_text[node.full_span.start..node.value_span.start]);
        match node.kind {
            NodeKind::Scalar => out.push_str(&node.scalar_value),
            NodeKind::List | NodeKind::Group => {
                let end = self.render_children(&node.children, node.value_span.start, out);
                out.push_str(&self.raw_text[end..node.value_span.end]);
            }
        }
        out.push_str(&self.raw_text[node.value_span.end..node.full_span.end]);
    }

    pub fn text_at(&self, span: Span) -> &str {
        &self.raw_text[span.start..span.end]
    }

    /// Resolves a dotted path such as `security.ciphering_algorithms` or `gNBs.0.SCTP`.
    pub fn resolve(&self, path: &str) -> Option<&ConfigNode> {
        let mut segments = path.split('.');
        let first = segments.next()?;
        let mut node = self.root.iter().find(|n| n.name == first)?;
        for seg in segments {
            node = node.child(seg)?;
        }
        Some(node)
    }

    /// Every node with its dotted path, in document order.
    pub fn walk(&self) -> Vec<(String, &ConfigNode)> {
        fn visit<'a>(prefix: &str, nodes: &'a [ConfigNode], out: &mut Vec<(String, &'a ConfigNode)>) {
            for n in nodes {
                let path = if prefix.is_empty() { n.name.clone() } else { format!("{prefix}.{}", n.name) };
                out.push((path.clone(), n));
                visit(&path, &n.children, out);
            }
        }
        let mut out = Vec::new();
        visit("", &self.root, &mut out);
        out
    }

    /// Maps a bare setting name (or a full path) onto the first matching dotted path.
    pub fn qualify(&self, name: &str) -> Option<String> {
        if self.resolve(name).is_some() {
            return Some(name.to_string());
        }
        let suffix = format!(".{name}");
        self.walk()
            .into_iter()
            .find(|(path, _)| path.ends_with(&suffix))
            .map(|(path, _)| path)
    }

    pub fn top_level_names(&self) -> Vec<&str> {
        self.root.iter().map(|n| n.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("stale edit at {path}: expected {expected:?}, found {found:?}")]
    StaleEdit { path: String, expected: String, found: String },
    #[error("path not found: {0}")]
    PathNotFound(String),
    #[error("conflicting edits for {0}")]
    ConflictingEdits(String),
}

/// 1-based line and column (in characters) of a byte offset.
pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map(|i| i + 1).unwrap_or(0);
    (line, before[line_start..].chars().count() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newline_detection() {
        assert_eq!(NewlineStyle::detect("a = 1;\r\nb = 2;\n"), NewlineStyle::CrLf);
        assert_eq!(NewlineStyle::detect("a = 1;\nb = 2;\r\n"), NewlineStyle::Lf);
        assert_eq!(NewlineStyle::detect(""), NewlineStyle::Lf);
    }

    #[test]
    fn line_col_counts_chars() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("é = {", 5), (1, 5));
    }
}
