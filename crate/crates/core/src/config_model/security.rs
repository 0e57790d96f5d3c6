use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ConfigDocument, ConfigNode, NodeKind, Span};

/// Security-relevant settings of the top-level `security` group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityProfile {
    pub ciphering_algorithms: Vec<String>,
    pub integrity_algorithms: Vec<String>,
    pub drb_ciphering: String,
    pub drb_integrity: String,
    /// Value span per field name, e.g. `ciphering_algorithms`.
    pub source_spans: BTreeMap<String, Span>,
    /// Algorithm names outside `nea0..nea3` / `nia0..nia3`, kept as written.
    pub unknown_algorithms: Vec<String>,
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"').and_then(|t| t.strip_suffix('"')).unwrap_or(s)
}

fn scalar_items(node: &ConfigNode) -> Vec<String> {
    match node.kind {
        NodeKind::Scalar => vec![unquote(&node.scalar_value).to_string()],
        NodeKind::List => node
            .children
            .iter()
            .filter(|c| c.kind == NodeKind::Scalar)
            .map(|c| unquote(&c.scalar_value).to_string())
            .collect(),
        NodeKind::Group => Vec::new(),
    }
}

fn valid_algorithm(name: &str, prefix: &str) -> bool {
    name.len() == 4 && name.starts_with(prefix) && matches!(name.as_bytes()[3], b'0'..=b'3')
}

pub fn extract_security_profile(doc: &ConfigDocument) -> SecurityProfile {
    let mut profile = SecurityProfile::default();
    let Some(group) = doc.root.iter().find(|n| n.name == "security" && n.kind == NodeKind::Group) else {
        return profile;
    };
    for node in &group.children {
        match node.name.as_str() {
            "ciphering_algorithms" => profile.ciphering_algorithms = scalar_items(node),
            "integrity_algorithms" => profile.integrity_algorithms = scalar_items(node),
            "drb_ciphering" => profile.drb_ciphering = unquote(&node.scalar_value).to_string(),
            "drb_integrity" => profile.drb_integrity = unquote(&node.scalar_value).to_string(),
            _ => continue,
        }
        profile.source_spans.insert(node.name.clone(), node.value_span);
    }
    profile.unknown_algorithms = profile
        .ciphering_algorithms
        .iter()
        .filter(|a| !valid_algorithm(a, "nea"))
        .chain(profile.integrity_algorithms.iter().filter(|a| !valid_algorithm(a, "nia")))
        .cloned()
        .collect();
    profile
}

impl SecurityProfile {
    pub fn is_empty(&self) -> bool {
        self.source_spans.is_empty()
    }

    /// Settings that disable protection outright: null algorithms in the
    /// preference lists and bearer protection switched off. Keys are
    /// `security.<field>` paths.
    pub fn weak_settings(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.ciphering_algorithms.iter().any(|a| a == "nea0") {
            out.push(("security.ciphering_algorithms".into(), "null ciphering algorithm nea0 is configured".into()));
        }
        if self.integrity_algorithms.iter().any(|a| a == "nia0") {
            out.push(("security.integrity_algorithms".into(), "null integrity algorithm nia0 is configured".into()));
        }
        if self.drb_ciphering.eq_ignore_ascii_case("no") {
            out.push(("security.drb_ciphering".into(), "ciphering of data radio bearers is disabled".into()));
        }
        if self.drb_integrity.eq_ignore_ascii_case("no") {
            out.push(("security.drb_integrity".into(), "integrity protection of data radio bearers is disabled".into()));
        }
        out
    }
}
