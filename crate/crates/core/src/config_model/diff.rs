use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{parse_config, ConfigDocument, ConfigError, ConfigNode, Span};
use crate::agents::ComplianceReport;

/// A contiguous run of differing lines: its bytes in the original and in the edited text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedRegion {
    pub original: Span,
    pub edited: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigDiff {
    pub changed_regions: Vec<ChangedRegion>,
    pub touched_group_paths: BTreeSet<String>,
}

impl ConfigDiff {
    pub fn is_empty(&self) -> bool {
        self.changed_regions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MinimalChangeVerdict {
    Pass,
    Fail(Vec<String>),
}

/// Printed for changes that fall outside every top-level setting.
pub const ROOT_PATH_LABEL: &str = "<root>";

fn lines_with_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n')
        .map(|line| {
            let start = offset;
            offset += line.len();
            (start, line)
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Op {
    Keep,
    Delete,
    Insert,
}

/// Line-level edit script from a longest-common-subsequence table.
fn lcs_ops(a: &[&str], b: &[&str]) -> Vec<Op> {
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..]
        .iter()
        .rev()
        .zip(b[prefix..].iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let a_mid = &a[prefix..a.len() - suffix];
    let b_mid = &b[prefix..b.len() - suffix];
    let (n, m) = (a_mid.len(), b_mid.len());

    // table[i][j] = LCS length of a_mid[i..] and b_mid[j..]
    let width = m + 1;
    let mut table = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[i * width + j] = if a_mid[i] == b_mid[j] {
                table[(i + 1) * width + j + 1] + 1
            } else {
                table[(i + 1) * width + j].max(table[i * width + j + 1])
            };
        }
    }

    let mut ops = vec![Op::Keep; prefix];
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && a_mid[i] == b_mid[j] {
            ops.push(Op::Keep);
            i += 1;
            j += 1;
        } else if j < m && (i == n || table[i * width + j + 1] >= table[(i + 1) * width + j]) {
            ops.push(Op::Insert);
            j += 1;
        } else {
            ops.push(Op::Delete);
            i += 1;
        }
    }
    ops.extend(std::iter::repeat_n(Op::Keep, suffix));
    ops
}

fn trimmed_span(line_start: usize, line: &str) -> Span {
    let lead = line.len() - line.trim_start().len();
    let body = line.trim();
    Span::new(line_start + lead, line_start + lead + body.len())
}

fn strictly_inside(node: &ConfigNode, span: Span) -> bool {
    node.is_container() && span.start > node.value_span.start && span.end < node.value_span.end
}

/// Dotted path of the innermost list or group whose interior holds the line;
/// top-level lines map to the setting they belong to, or to the root ("").
pub(crate) fn enclosing_path(doc: &ConfigDocument, line: Span) -> String {
    let mut path: Vec<&str> = Vec::new();
    let mut nodes = &doc.root;
    while let Some(node) = nodes.iter().find(|n| strictly_inside(n, line)) {
        path.push(&node.name);
        nodes = &node.children;
    }
    if path.is_empty() && !line.is_empty() {
        if let Some(node) = doc
            .root
            .iter()
            .find(|n| n.full_span.start < line.end && line.start < n.full_span.end)
        {
            return node.name.clone();
        }
    }
    path.join(".")
}

/// Line-granularity diff of two configuration texts, with each changed line
/// attributed to its enclosing group.
pub fn diff_configs(original: &str, edited: &str) -> Result<ConfigDiff, ConfigError> {
    let orig_doc = parse_config(original)?;
    let edit_doc = parse_config(edited)?;
    let a = lines_with_offsets(original);
    let b = lines_with_offsets(edited);
    let a_lines: Vec<&str> = a.iter().map(|(_, l)| *l).collect();
    let b_lines: Vec<&str> = b.iter().map(|(_, l)| *l).collect();
    let ops = lcs_ops(&a_lines, &b_lines);

    let mut diff = ConfigDiff::default();
    let (mut i, mut j) = (0usize, 0usize);
    let mut k = 0;
    while k < ops.len() {
        if ops[k] == Op::Keep {
            i += 1;
            j += 1;
            k += 1;
            continue;
        }
        let (i0, j0) = (i, j);
        while k < ops.len() && ops[k] != Op::Keep {
            match ops[k] {
                Op::Delete => {
                    let (start, line) = a[i];
                    diff.touched_group_paths.insert(enclosing_path(&orig_doc, trimmed_span(start, line)));
                    i += 1;
                }
                Op::Insert => {
                    let (start, line) = b[j];
                    diff.touched_group_paths.insert(enclosing_path(&edit_doc, trimmed_span(start, line)));
                    j += 1;
                }
                Op::Keep => unreachable!(),
            }
            k += 1;
        }
        let byte_at = |lines: &[(usize, &str)], idx: usize, total: usize| lines.get(idx).map(|(s, _)| *s).unwrap_or(total);
        diff.changed_regions.push(ChangedRegion {
            original: Span::new(byte_at(&a, i0, original.len()), byte_at(&a, i, original.len())),
            edited: Span::new(byte_at(&b, j0, edited.len()), byte_at(&b, j, edited.len())),
        });
    }
    Ok(diff)
}

fn related(touched: &str, violation: &str) -> bool {
    !touched.is_empty()
        && (violation == touched
            || violation.strip_prefix(touched).is_some_and(|rest| rest.starts_with('.'))
            || touched.strip_prefix(violation).is_some_and(|rest| rest.starts_with('.')))
}

/// Every touched group must enclose (or sit inside) a reported violation.
pub fn check_minimal_change<S: AsRef<str>>(diff: &ConfigDiff, violation_paths: &[S]) -> MinimalChangeVerdict {
    let offending: Vec<String> = diff
        .touched_group_paths
        .iter()
        .filter(|t| !violation_paths.iter().any(|v| related(t, v.as_ref())))
        .map(|t| if t.is_empty() { ROOT_PATH_LABEL.to_string() } else { t.clone() })
        .collect();
    if offending.is_empty() {
        MinimalChangeVerdict::Pass
    } else {
        MinimalChangeVerdict::Fail(offending)
    }
}

pub fn verify_minimal_change(diff: &ConfigDiff, report: &ComplianceReport) -> MinimalChangeVerdict {
    let paths: Vec<&str> = report.violations.iter().map(|v| v.config_path.as_str()).collect();
    check_minimal_change(diff, &paths)
}
