use serde::{Deserialize, Serialize};

use super::{ConfigDocument, ConfigError};

/// Replacement of one node's value text, optionally preceded by new comment lines.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEdit {
    pub path: String,
    pub old_value: String,
    pub new_value: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inserted_comment_lines: Vec<String>,
}

impl ConfigEdit {
    pub fn replace(path: impl Into<String>, old_value: impl Into<String>, new_value: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            old_value: old_value.into(),
            new_value: new_value.into(),
            inserted_comment_lines: Vec::new(),
        }
    }

    /// Comment lines are indented like the edited node's line; an empty
    /// string inserts a bare blank line.
    pub fn with_comments<I, S>(mut self, lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.inserted_comment_lines = lines.into_iter().map(Into::into).collect();
        self
    }
}

struct Splice {
    at: usize,
    remove_to: usize,
    insert: String,
    // insertions sort ahead of a replacement at the same offset
    order: (u8, usize),
}

/// Applies edits against the original text; bytes outside edited value spans
/// and the inserted comment lines are copied unchanged.
pub fn apply_edits(doc: &ConfigDocument, edits: &[ConfigEdit]) -> Result<String, ConfigError> {
    let raw = &doc.raw_text;
    let newline = doc.newline_style.as_str();
    let mut splices = Vec::with_capacity(edits.len() * 2);
    let mut seen = std::collections::BTreeSet::new();

    for (i, edit) in edits.iter().enumerate() {
        if !seen.insert(edit.path.as_str()) {
            return Err(ConfigError::ConflictingEdits(edit.path.clone()));
        }
        let node = doc.resolve(&edit.path).ok_or_else(|| ConfigError::PathNotFound(edit.path.clone()))?;
        let current = doc.text_at(node.value_span);
        if current != edit.old_value {
            return Err(ConfigError::StaleEdit {
                path: edit.path.clone(),
                expected: edit.old_value.clone(),
                found: current.to_string(),
            });
        }
        if !edit.inserted_comment_lines.is_empty() {
            let line_start = raw[..node.full_span.start].rfind('\n').map(|p| p + 1).unwrap_or(0);
            let indent: String = raw[line_start..]
                .chars()
                .take_while(|c| *c == ' ' || *c == '\t')
                .collect();
            let mut block = String::new();
            for line in &edit.inserted_comment_lines {
                if !line.is_empty() {
                    block.push_str(&indent);
                    block.push_str(line);
                }
                block.push_str(newline);
            }
            splices.push(Splice { at: line_start, remove_to: line_start, insert: block, order: (0, i) });
        }
        if edit.new_value != edit.old_value {
            splices.push(Splice {
                at: node.value_span.start,
                remove_to: node.value_span.end,
                insert: edit.new_value.clone(),
                order: (1, i),
            });
        }
    }

    splices.sort_by_key(|s| (s.at, s.order));
    let mut out = String::with_capacity(raw.len() + 256);
    let mut cursor = 0;
    for s in &splices {
        if s.at < cursor {
            let path = &edits[s.order.1].path;
            return Err(ConfigError::ConflictingEdits(path.clone()));
        }
        out.push_str(&raw[cursor..s.at]);
        out.push_str(&s.insert);
        cursor = s.remove_to;
    }
    out.push_str(&raw[cursor..]);
    Ok(out)
}
