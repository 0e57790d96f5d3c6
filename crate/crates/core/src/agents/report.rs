use std::fmt;

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::config_model::parse_config;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComplianceStatus {
    Compliant,
    NonCompliant,
}

impl fmt::Display for ComplianceStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComplianceStatus::Compliant => "Compliant",
            ComplianceStatus::NonCompliant => "Non-Compliant",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub summary: String,
    /// Dotted path of the offending setting; empty when the text names none.
    pub config_path: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecReference {
    pub clause: String,
    pub filename: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub status: ComplianceStatus,
    pub violations: Vec<Violation>,
    pub spec_references: Vec<SpecReference>,
    pub modifications: Vec<String>,
    pub impacts: Vec<String>,
    pub out_of_scope: Vec<String>,
    pub corrected_config: Option<String>,
    pub raw_text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    Violations,
    References,
    Modifications,
    Impacts,
    OutOfScope,
}

const SECTIONS: [(&str, Section); 5] = [
    ("violations found", Section::Violations),
    ("specification references", Section::References),
    ("recommended code modifications", Section::Modifications),
    ("security impact analysis", Section::Impacts),
    ("out-of-scope recommendations", Section::OutOfScope),
];

fn heading(line: &str) -> Option<Section> {
    let t = line.trim().trim_matches(|c: char| c == '#' || c == '*' || c == '_' || c.is_whitespace());
    let t = t.trim_end_matches(':').trim().to_ascii_lowercase();
    let t = t.strip_suffix("(optional)").map(str::trim_end).unwrap_or(&t);
    SECTIONS.iter().find(|(name, _)| *name == t).map(|(_, s)| *s)
}

fn parse_status(line: &str) -> Option<Result<ComplianceStatus, String>> {
    let cleaned: String = line.chars().filter(|c| *c != '*' && *c != '_').collect();
    let lower = cleaned.to_ascii_lowercase();
    let idx = lower.find("compliance status")?;
    let value = lower[idx + "compliance status".len()..].trim_start_matches([':', ' ', '\t']);
    let letters: String = value.chars().filter(|c| c.is_ascii_alphabetic() || *c == '|').collect();
    Some(match letters.as_str() {
        "compliant" => Ok(ComplianceStatus::Compliant),
        "noncompliant" => Ok(ComplianceStatus::NonCompliant),
        other => Err(format!("unrecognized compliance status {other:?}")),
    })
}

/// Strips a leading item marker: `1.`, `1)`, `1 `, a bare number glued to text, or a bullet.
fn item_start(line: &str) -> Option<&str> {
    if line.starts_with(char::is_whitespace) {
        return None;
    }
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &line[digits..];
        let rest = rest.strip_prefix(['.', ')']).unwrap_or(rest).trim_start();
        return (!rest.is_empty()).then_some(rest);
    }
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return Some(rest.trim_start());
        }
    }
    None
}

fn is_none_item(text: &str) -> bool {
    let t = text.trim().trim_end_matches('.').to_ascii_lowercase();
    matches!(t.as_str(), "none" | "n/a" | "na" | "none found" | "no violations" | "no violations found" | "not applicable" | "-")
}

fn first_backticked(text: &str) -> Option<&str> {
    let start = text.find('`')? + 1;
    let len = text[start..].find('`')?;
    Some(&text[start..start + len])
}

fn leading_identifier(s: &str) -> &str {
    let end = s
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '.'))
        .unwrap_or(s.len());
    s[..end].trim_end_matches('.')
}

fn spec_reference(line: &str) -> Option<SpecReference> {
    let idx = line.find("Filename:")?;
    let after = line[idx + "Filename:".len()..].trim_start();
    let filename = if let Some(rest) = after.strip_prefix('`') {
        rest.split('`').next().unwrap_or("")
    } else {
        after.split(')').next().unwrap_or("").trim()
    };
    if filename.is_empty() {
        return None;
    }
    let before = line[..idx].trim_end();
    let before = before.strip_suffix('(').unwrap_or(before).trim_end().trim_end_matches(',');
    let clause = before.trim().trim_start_matches(['*', '-', '•']).trim();
    Some(SpecReference { clause: clause.to_string(), filename: filename.to_string() })
}

/// Parses an assessment response into a structured report.
///
/// The status line is matched case-insensitively; numbered or bulleted
/// lines start list items under the known section headings, and indented
/// lines continue the current item. The ```` ```corrected ```` block is
/// captured byte-for-byte.
pub fn parse_report(text: &str) -> Result<ComplianceReport, AgentError> {
    let err = |message: String| AgentError::ReportParse { message, raw_text: text.to_string() };

    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut status: Option<ComplianceStatus> = None;
    let mut section: Option<Section> = None;
    let mut items: Vec<(Section, Vec<String>)> = Vec::new();
    let mut references = Vec::new();
    let mut corrected: Option<String> = None;

    let mut i = 0;
    while i < lines.len() {
        let raw = lines[i];
        let line = raw.trim_end_matches(['\n', '\r']);
        i += 1;

        if line.trim_start().starts_with("```corrected") {
            if corrected.is_some() {
                return Err(err("more than one corrected block".into()));
            }
            let mut block = String::new();
            let mut closed = false;
            while i < lines.len() {
                let l = lines[i];
                i += 1;
                if l.trim_end_matches(['\n', '\r']).trim() == "```" {
                    closed = true;
                    break;
                }
                block.push_str(l);
            }
            if !closed {
                return Err(err("corrected block is never closed".into()));
            }
            corrected = Some(block);
            section = None;
            continue;
        }
        if status.is_none() {
            if let Some(parsed) = parse_status(line) {
                status = Some(parsed.map_err(err)?);
                continue;
            }
        }
        if let Some(s) = heading(line) {
            section = Some(s);
            continue;
        }
        let Some(current) = section else { continue };
        if line.trim().is_empty() {
            continue;
        }
        if current == Section::References {
            if let Some(r) = spec_reference(line) {
                references.push(r);
            }
            continue;
        }
        match item_start(line) {
            Some(text) => items.push((current, vec![text.trim().to_string()])),
            None => match items.last_mut() {
                Some((s, parts)) if *s == current => parts.push(line.trim().to_string()),
                _ => items.push((current, vec![line.trim().to_string()])),
            },
        }
    }

    let status = status.ok_or_else(|| err("missing \"Compliance Status:\" line".into()))?;
    let collect = |want: Section| -> Vec<String> {
        items
            .iter()
            .filter(|(s, _)| *s == want)
            .map(|(_, parts)| parts.join("\n"))
            .filter(|t| !is_none_item(t))
            .collect()
    };
    let violations = collect(Section::Violations)
        .into_iter()
        .map(|summary| {
            let config_path = first_backticked(&summary).map(leading_identifier).unwrap_or("").to_string();
            Violation { summary, config_path }
        })
        .collect();
    let report = ComplianceReport {
        status,
        violations,
        spec_references: references,
        modifications: collect(Section::Modifications),
        impacts: collect(Section::Impacts),
        out_of_scope: collect(Section::OutOfScope),
        corrected_config: corrected,
        raw_text: text.to_string(),
    };
    match report.status {
        ComplianceStatus::NonCompliant => {
            let Some(block) = &report.corrected_config else {
                return Err(err("Non-Compliant report without a corrected block".into()));
            };
            parse_config(block).map_err(|e| err(format!("corrected block does not parse: {e}")))?;
        }
        ComplianceStatus::Compliant => {
            if report.corrected_config.is_some() {
                return Err(err("Compliant report carries a corrected block".into()));
            }
            if !report.modifications.is_empty() {
                return Err(err("Compliant report lists modifications".into()));
            }
        }
    }
    Ok(report)
}

impl ComplianceReport {
    pub fn violation_paths(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.config_path.as_str()).filter(|p| !p.is_empty()).collect()
    }

    /// Markdown rendering with sections in the order the assessment prompt asks for.
    pub fn to_markdown(&self) -> String {
        fn list(out: &mut String, title: &str, items: &[String]) {
            out.push_str(&format!("\n## {title}\n\n"));
            if items.is_empty() {
                out.push_str("None.\n");
            }
            for (i, item) in items.iter().enumerate() {
                let mut lines = item.lines();
                out.push_str(&format!("{}. {}\n", i + 1, lines.next().unwrap_or("")));
                for l in lines {
                    out.push_str(&format!("   {l}\n"));
                }
            }
        }
        let mut out = format!("# Compliance Report\n\nCompliance Status: {}\n", self.status);
        let violations: Vec<String> = self
            .violations
            .iter()
            .map(|v| if v.config_path.is_empty() { v.summary.clone() } else { format!("[{}] {}", v.config_path, v.summary) })
            .collect();
        list(&mut out, "Violations Found", &violations);
        let refs: Vec<String> = self.spec_references.iter().map(|r| format!("{} (Filename: `{}`)", r.clause, r.filename)).collect();
        list(&mut out, "Specification References", &refs);
        list(&mut out, "Recommended Code Modifications", &self.modifications);
        list(&mut out, "Security Impact Analysis", &self.impacts);
        list(&mut out, "Out-of-Scope Recommendations", &self.out_of_scope);
        if let Some(c) = &self.corrected_config {
            out.push_str("\n## Corrected Configuration\n\n```corrected\n");
            out.push_str(c);
            if !c.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("```\n");
        }
        out
    }
}
