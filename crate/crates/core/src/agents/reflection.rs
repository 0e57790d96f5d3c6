use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::AgentError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IssueType {
    MissedViolation,
    IncorrectCitation,
    OverChange,
    UnderChange,
    FormattingChange,
    IncompleteOutput,
    ScopeError,
    Other,
}

impl IssueType {
    const ALL: [IssueType; 8] = [
        IssueType::MissedViolation,
        IssueType::IncorrectCitation,
        IssueType::OverChange,
        IssueType::UnderChange,
        IssueType::FormattingChange,
        IssueType::IncompleteOutput,
        IssueType::ScopeError,
        IssueType::Other,
    ];

    pub fn parse(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.to_string() == label.trim())
    }
}

impl fmt::Display for IssueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub id: String,
    #[serde(rename = "type")]
    pub issue_type: IssueType,
    pub description: String,
    pub required_action: String,
}

/// Reflection verdict; serializes to the same JSON shape the reflection
/// prompt asks for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionFeedback {
    #[serde(rename = "OverallAssessment")]
    pub overall_assessment: String,
    #[serde(rename = "Issues")]
    pub issues: Vec<Issue>,
    #[serde(rename = "MustFixSummary")]
    pub must_fix_summary: Vec<String>,
}

impl ReflectionFeedback {
    pub fn converged(&self) -> bool {
        self.issues.is_empty() && self.must_fix_summary.is_empty()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("feedback serializes")
    }
}

fn strip_json_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

fn take_string(obj: &mut Map<String, Value>, key: &str) -> Result<String, String> {
    match obj.remove(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(format!("\"{key}\" must be a string")),
        None => Err(format!("missing \"{key}\"")),
    }
}

fn take_array(obj: &mut Map<String, Value>, key: &str) -> Result<Vec<Value>, String> {
    match obj.remove(key) {
        Some(Value::Array(a)) => Ok(a),
        Some(_) => Err(format!("\"{key}\" must be an array")),
        None => Err(format!("missing \"{key}\"")),
    }
}

fn reject_extra(obj: &Map<String, Value>, what: &str) -> Result<(), String> {
    match obj.keys().next() {
        Some(k) => Err(format!("unexpected key \"{k}\" in {what}")),
        None => Ok(()),
    }
}

fn parse_issue(value: Value, index: usize) -> Result<Issue, String> {
    let Value::Object(mut obj) = value else {
        return Err(format!("issue {index} is not an object"));
    };
    let id = take_string(&mut obj, "id")?;
    let label = take_string(&mut obj, "type")?;
    let mut description = take_string(&mut obj, "description")?;
    let required_action = take_string(&mut obj, "required_action")?;
    reject_extra(&obj, "issue")?;
    let issue_type = match IssueType::parse(&label) {
        Some(t) => t,
        None => {
            description = format!("[original type: {label}] {description}");
            IssueType::Other
        }
    };
    Ok(Issue { id, issue_type, description, required_action })
}

fn parse_feedback_value(text: &str) -> Result<ReflectionFeedback, String> {
    let value: Value = serde_json::from_str(strip_json_fence(text)).map_err(|e| format!("not JSON: {e}"))?;
    let Value::Object(mut obj) = value else {
        return Err("feedback is not a JSON object".into());
    };
    let overall_assessment = take_string(&mut obj, "OverallAssessment")?;
    let issues = take_array(&mut obj, "Issues")?
        .into_iter()
        .enumerate()
        .map(|(i, v)| parse_issue(v, i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let must_fix_summary = take_array(&mut obj, "MustFixSummary")?
        .into_iter()
        .map(|v| match v {
            Value::String(s) => Ok(s),
            _ => Err("\"MustFixSummary\" items must be strings".to_string()),
        })
        .collect::<Result<Vec<_>, _>>()?;
    reject_extra(&obj, "feedback")?;
    let mut seen = BTreeSet::new();
    for issue in &issues {
        if !seen.insert(issue.id.as_str()) {
            return Err(format!("duplicate issue id {:?}", issue.id));
        }
    }
    Ok(ReflectionFeedback { overall_assessment, issues, must_fix_summary })
}

/// Strict parse of a reflection response. A surrounding ```` ```json ```` fence is tolerated.
pub fn parse_feedback(text: &str) -> Result<ReflectionFeedback, AgentError> {
    parse_feedback_value(text).map_err(|message| AgentError::FeedbackParse { message, raw_text: text.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_feedback_converges() {
        let f = parse_feedback(r#"{"OverallAssessment": "ok", "Issues": [], "MustFixSummary": []}"#).unwrap();
        assert!(f.converged());
    }

    #[test]
    fn one_scope_error_is_not_converged() {
        let f = parse_feedback(
            r#"```json
{"OverallAssessment": "x", "Issues": [{"id": "ISSUE-1", "type": "ScopeError", "description": "d", "required_action": "r"}],
 "MustFixSummary": ["drop the TLS violation"]}
```"#,
        )
        .unwrap();
        assert!(!f.converged());
        assert_eq!(f.issues[0].issue_type, IssueType::ScopeError);
        assert_eq!(f.must_fix_summary.len(), 1);
    }

    #[test]
    fn unknown_type_maps_to_other() {
        let f = parse_feedback(
            r#"{"OverallAssessment": "", "Issues": [{"id": "A", "type": "Style", "description": "d", "required_action": "r"}], "MustFixSummary": []}"#,
        )
        .unwrap();
        assert_eq!(f.issues[0].issue_type, IssueType::Other);
        assert_eq!(f.issues[0].description, "[original type: Style] d");
        assert!(!f.converged());
    }

    #[test]
    fn strictness() {
        for bad in [
            "[]",
            "not json",
            r#"{"OverallAssessment": "x", "Issues": []}"#,
            r#"{"OverallAssessment": "x", "Issues": [], "MustFixSummary": [], "Extra": 1}"#,
            r#"{"OverallAssessment": "x", "Issues": [{"id": "A", "type": "Other", "description": "d", "required_action": "r"}, {"id": "A", "type": "Other", "description": "d", "required_action": "r"}], "MustFixSummary": []}"#,
            r#"{"OverallAssessment": "x", "Issues": [{"id": "A", "type": "Other", "description": "d"}], "MustFixSummary": []}"#,
            r#"{"OverallAssessment": "x", "Issues": [], "MustFixSummary": [1]}"#,
        ] {
            assert!(matches!(parse_feedback(bad), Err(AgentError::FeedbackParse { .. })), "{bad}");
        }
    }

    #[test]
    fn serialization_round_trips_through_parser() {
        let f = ReflectionFeedback {
            overall_assessment: "a".into(),
            issues: vec![Issue { id: "ISSUE-1".into(), issue_type: IssueType::UnderChange, description: "d".into(), required_action: "r".into() }],
            must_fix_summary: vec!["m".into()],
        };
        assert_eq!(parse_feedback(&f.to_json_pretty()).unwrap(), f);
    }
}
