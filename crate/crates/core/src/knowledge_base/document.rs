use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::KbError;
use crate::digest::{sha256_hex, short_id};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecDocument {
    pub doc_id: String,
    pub filename: String,
    pub source_path_or_url: String,
    pub content: String,
    /// Hex SHA-256 of `content`.
    pub content_hash: String,
    pub ingested_at: DateTime<Utc>,
}

impl SpecDocument {
    fn with_content(mut self, content: String) -> Self {
        self.content_hash = sha256_hex(&content);
        self.content = content;
        self
    }
}

fn is_table_line(line: &str) -> bool {
    let t = line.trim();
    t.starts_with('|') && t.len() > 1
}

fn table_cells(line: &str) -> Vec<String> {
    let t = line.trim();
    let t = t.strip_prefix('|').unwrap_or(t);
    let t = t.strip_suffix('|').unwrap_or(t);
    t.split('|').map(|c| c.trim().to_string()).collect()
}

fn is_separator_row(line: &str) -> bool {
    let cells = table_cells(line);
    !cells.is_empty()
        && cells
            .iter()
            .all(|c| !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':' | ' ')) && c.contains('-'))
}

/// Rewrites markdown tables (header row, separator row, body rows) as one
/// `header: cell; header: cell` line per body row. Other text is untouched.
fn linearize_tables(raw: &str) -> String {
    let lines: Vec<&str> = raw.split_inclusive('\n').collect();
    let mut out = String::with_capacity(raw.len());
    let mut i = 0;
    while i < lines.len() {
        if is_table_line(lines[i]) && i + 1 < lines.len() && is_separator_row(lines[i + 1]) {
            let header = table_cells(lines[i]);
            let mut j = i + 2;
            while j < lines.len() && is_table_line(lines[j]) {
                let cells = table_cells(lines[j]);
                let pairs: Vec<String> = header
                    .iter()
                    .zip(cells.iter().chain(std::iter::repeat(&String::new())))
                    .map(|(h, c)| format!("{h}: {c}"))
                    .collect();
                out.push_str(&pairs.join("; "));
                out.push('\n');
                j += 1;
            }
            i = j;
        } else {
            out.push_str(lines[i]);
            i += 1;
        }
    }
    out
}

pub fn extract(raw: &str, filename: &str) -> Result<SpecDocument, KbError> {
    extract_at(raw, filename, filename, Utc::now())
}

/// [`extract`] with explicit provenance and timestamp.
pub fn extract_at(raw: &str, filename: &str, source: &str, ingested_at: DateTime<Utc>) -> Result<SpecDocument, KbError> {
    if raw.trim().is_empty() {
        return Err(KbError::EmptyDocument(filename.to_string()));
    }
    let content = linearize_tables(raw);
    let doc = SpecDocument {
        doc_id: short_id(format!("{filename}\n{}", sha256_hex(&content))),
        filename: filename.to_string(),
        source_path_or_url: source.to_string(),
        content: String::new(),
        content_hash: String::new(),
        ingested_at,
    };
    Ok(doc.with_content(content))
}

/// Line patterns removed by [`clean`], matched against each line with
/// surrounding whitespace trimmed.
#[derive(Clone, Debug)]
pub struct CleanOptions {
    pub boilerplate: Vec<Regex>,
}

impl CleanOptions {
    pub fn none() -> Self {
        Self { boilerplate: Vec::new() }
    }

    pub fn from_patterns<S: AsRef<str>>(patterns: &[S]) -> Result<Self, KbError> {
        let boilerplate = patterns
            .iter()
            .map(|p| {
                Regex::new(p.as_ref())
                    .map_err(|e| KbError::InvalidPattern { pattern: p.as_ref().to_string(), message: e.to_string() })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { boilerplate })
    }

    /// ETSI running headers and footers plus "Page N" lines.
    pub fn default_patterns() -> Vec<String> {
        vec![
            r"^ETSI$".into(),
            r"^ETSI TS \d{3} \d{3} V\d+\.\d+\.\d+ \(\d{4}-\d{2}\)$".into(),
            r"^(?i:page) \d+( of \d+)?$".into(),
        ]
    }
}

impl Default for CleanOptions {
    fn default() -> Self {
        Self::from_patterns(&Self::default_patterns()).expect("built-in patterns compile")
    }
}

/// Normalizes line endings, strips trailing whitespace and boilerplate lines,
/// collapses runs of more than two blank lines to one and trims blank lines
/// at both ends. Idempotent.
pub fn clean(doc: &SpecDocument, options: &CleanOptions) -> SpecDocument {
    let normalized = doc.content.replace("\r\n", "\n");
    let kept: Vec<&str> = normalized
        .split('\n')
        .map(str::trim_end)
        .filter(|line| {
            let t = line.trim();
            t.is_empty() || !options.boilerplate.iter().any(|re| re.is_match(t))
        })
        .collect();

    let mut lines: Vec<&str> = Vec::with_capacity(kept.len());
    let mut i = 0;
    while i < kept.len() {
        if kept[i].is_empty() {
            let run = kept[i..].iter().take_while(|l| l.is_empty()).count();
            let keep = if run > 2 { 1 } else { run };
            lines.extend(std::iter::repeat_n("", keep));
            i += run;
        } else {
            lines.push(kept[i]);
            i += 1;
        }
    }
    let start = lines.iter().position(|l| !l.is_empty()).unwrap_or(lines.len());
    let end = lines.iter().rposition(|l| !l.is_empty()).map(|p| p + 1).unwrap_or(start);
    let mut content = lines[start..end].join("\n");
    if !content.is_empty() {
        content.push('\n');
    }
    doc.clone().with_content(content)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_text_passes_through() {
        let raw = "The AMF shall support NIA2.\nSecond line.\n";
        let doc = extract(raw, "a.md").unwrap();
        assert_eq!(doc.content, raw);
        assert_eq!(doc.content_hash, sha256_hex(raw));
        assert_eq!(doc.filename, "a.md");
    }

    #[test]
    fn blank_only_is_empty_document() {
        assert_eq!(extract("\n \n\t\n", "b.md").unwrap_err(), KbError::EmptyDocument("b.md".into()));
    }

    #[test]
    fn table_rows_are_linearized() {
        let raw = "Intro\n| Algorithm | Use |\n|---|:---:|\n| NEA0 | null |\n| NEA2 | AES |\n| NIA2 | AES-CMAC |\nAfter\n";
        let doc = extract(raw, "t.md").unwrap();
        assert_eq!(
            doc.content,
            "Intro\nAlgorithm: NEA0; Use: null\nAlgorithm: NEA2; Use: AES\nAlgorithm: NIA2; Use: AES-CMAC\nAfter\n"
        );
    }

    #[test]
    fn pipe_lines_without_separator_are_kept() {
        let raw = "| not a table\nplain\n";
        assert_eq!(extract(raw, "x.md").unwrap().content, raw);
    }

    #[test]
    fn blank_runs_collapse() {
        let doc = extract("a\n\n\n\n\n\nb\n\nc\n", "d.md").unwrap();
        let c = clean(&doc, &CleanOptions::none());
        assert_eq!(c.content, "a\n\nb\n\nc\n");
        let doc = extract("a\n\n\nb\n", "d.md").unwrap();
        assert_eq!(clean(&doc, &CleanOptions::none()).content, "a\n\n\nb\n");
    }

    #[test]
    fn boilerplate_removed_and_idempotent() {
        let raw = "\n\nClause 5.1\r\nETSI\r\nText here.   \n\nETSI\n\n\nPage 3\n\nMore.\n\n";
        let doc = extract(raw, "e.md").unwrap();
        let once = clean(&doc, &CleanOptions::default());
        assert_eq!(once.content, "Clause 5.1\nText here.\n\nMore.\n");
        assert_eq!(clean(&once, &CleanOptions::default()), once);
        assert_eq!(once.content_hash, sha256_hex(&once.content));
    }

    #[test]
    fn bad_pattern_is_reported() {
        assert!(matches!(CleanOptions::from_patterns(&["("]), Err(KbError::InvalidPattern { .. })));
    }
}
