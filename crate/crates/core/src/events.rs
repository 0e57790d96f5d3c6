//! Runtime security events: ingestion, sliding-window correlation into
//! patterns, and RuntimeEvent triggers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Trigger;
use crate::digest::duration_secs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventCategory {
    #[serde(alias = "Authentication", alias = "auth")]
    Authentication,
    #[serde(alias = "Authorization", alias = "authz")]
    Authorization,
    #[serde(alias = "AppBehavior", alias = "app")]
    AppBehavior,
}

impl fmt::Display for EventCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventCategory::Authentication => "authentication",
            EventCategory::Authorization => "authorization",
            EventCategory::AppBehavior => "app_behavior",
        })
    }
}

/// One line of an event file: `{"ts", "component", "category", "attrs"}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityEvent {
    #[serde(rename = "ts")]
    pub timestamp: DateTime<Utc>,
    #[serde(rename = "component")]
    pub component_id: String,
    pub category: EventCategory,
    #[serde(rename = "attrs", default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    /// 1-based.
    pub line: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventBatch {
    pub events: Vec<SecurityEvent>,
    pub rejects: Vec<RejectedLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("cannot read event file {path}: {message}")]
    FileUnreadable { path: String, message: String },
    #[error("invalid correlation rule {rule_id}: {message}")]
    InvalidRule { rule_id: String, message: String },
}

/// Parses event lines, skipping blanks. Malformed lines become rejects;
/// events are stably sorted by timestamp.
pub fn parse_events(text: &str) -> EventBatch {
    let mut batch = EventBatch::default();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SecurityEvent>(raw) {
            Ok(e) => batch.events.push(e),
            Err(e) => batch.rejects.push(RejectedLine { line: idx + 1, reason: e.to_string(), raw: raw.to_string() }),
        }
    }
    batch.events.sort_by_key(|e| e.timestamp);
    batch
}

pub fn ingest_events(path: &Path) -> Result<EventBatch, EventError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EventError::FileUnreadable { path: path.display().to_string(), message: e.to_string() })?;
    Ok(parse_events(&text))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationRule {
    pub rule_id: String,
    #[serde(default)]
    pub category: Option<EventCategory>,
    /// Attribute equalities that must all hold.
    #[serde(default)]
    pub predicate: BTreeMap<String, String>,
    pub threshold: usize,
    #[serde(with = "duration_secs")]
    pub window: Duration,
}

impl CorrelationRule {
    pub fn validate(&self) -> Result<(), EventError> {
        let bad = |message: &str| Err(EventError::InvalidRule { rule_id: self.rule_id.clone(), message: message.into() });
        if self.threshold == 0 {
            return bad("threshold must be at least 1");
        }
        if self.window.is_zero() {
            return bad("window must be positive");
        }
        Ok(())
    }

    pub fn matches(&self, e: &SecurityEvent) -> bool {
        self.category.is_none_or(|c| c == e.category)
            && self.predicate.iter().all(|(k, v)| e.attributes.get(k) == Some(v))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventPattern {
    pub rule_id: String,
    pub matched: Vec<SecurityEvent>,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub component_ids: BTreeSet<String>,
}

impl EventPattern {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "Correlation rule {} matched {} events between {} and {} on components {}.",
            self.rule_id,
            self.matched.len(),
            self.window_start.to_rfc3339(),
            self.window_end.to_rfc3339(),
            self.component_ids.iter().cloned().collect::<Vec<_>>().join(", "),
        );
        for e in &self.matched {
            let attrs: Vec<String> = e.attributes.iter().map(|(k, v)| format!("{k}={v}")).collect();
            s.push_str(&format!("\n- {} {} {} {}", e.timestamp.to_rfc3339(), e.component_id, e.category, attrs.join(" ")));
        }
        s
    }
}

fn within(window: Duration, from: DateTime<Utc>, to: DateTime<Utc>) -> bool {
    (to - from).to_std().map(|d| d <= window).unwrap_or(true)
}

fn close(rule: &CorrelationRule, matched: Vec<SecurityEvent>) -> EventPattern {
    EventPattern {
        rule_id: rule.rule_id.clone(),
        window_start: matched[0].timestamp,
        window_end: matched[matched.len() - 1].timestamp,
        component_ids: matched.iter().map(|e| e.component_id.clone()).collect(),
        matched,
    }
}

fn correlate_rule(events: &[SecurityEvent], rule: &CorrelationRule) -> Vec<EventPattern> {
    let mut out = Vec::new();
    let mut recent: VecDeque<&SecurityEvent> = VecDeque::new();
    let mut active: Option<Vec<SecurityEvent>> = None;
    for e in events.iter().filter(|e| rule.matches(e)) {
        if let Some(mut matched) = active.take() {
            if within(rule.window, matched[0].timestamp, e.timestamp) {
                matched.push(e.clone());
                active = Some(matched);
                continue;
            }
            out.push(close(rule, matched));
            recent.clear();
        }
        recent.push_back(e);
        while recent.front().is_some_and(|f| !within(rule.window, f.timestamp, e.timestamp)) {
            recent.pop_front();
        }
        if recent.len() >= rule.threshold {
            active = Some(recent.drain(..).cloned().collect());
        }
    }
    if let Some(matched) = active {
        out.push(close(rule, matched));
    }
    out
}

/// Sliding-window correlation. A pattern fires on the earliest event that
/// completes `threshold` matches within `window`; later matches inside the
/// window anchored at its first event join it instead of firing again.
/// Patterns are ordered by rule, then by window start.
pub fn correlate(events: &[SecurityEvent], rules: &[CorrelationRule]) -> Vec<EventPattern> {
    rules.iter().flat_map(|r| correlate_rule(events, r)).collect()
}

pub fn raise_triggers(patterns: &[EventPattern], received_at: DateTime<Utc>) -> Vec<Trigger> {
    patterns
        .iter()
        .map(|p| Trigger::RuntimeEvent { summary: p.summary(), pattern: p.clone(), received_at })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(secs: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_760_000_000 + secs, 0).unwrap()
    }

    fn fail(secs: i64, comp: &str) -> SecurityEvent {
        SecurityEvent {
            timestamp: t(secs),
            component_id: comp.into(),
            category: EventCategory::Authentication,
            attributes: BTreeMap::from([("result".to_string(), "failure".to_string())]),
        }
    }

    fn rule(n: usize, window: u64) -> CorrelationRule {
        CorrelationRule {
            rule_id: "auth-fail-burst".into(),
            category: Some(EventCategory::Authentication),
            predicate: BTreeMap::from([("result".to_string(), "failure".to_string())]),
            threshold: n,
            window: Duration::from_secs(window),
        }
    }

    #[test]
    fn parse_and_reject() {
        let text = concat!(
            r#"{"ts":"2026-01-01T00:00:20Z","component":"cu","category":"authentication","attrs":{"result":"failure"}}"#, "\n",
            "not json\n",
            r#"{"ts":"2026-01-01T00:00:00Z","component":"cu","category":"Authorization"}"#, "\n",
            "\n",
            r#"{"ts":"yesterday","component":"cu","category":"authentication"}"#, "\n",
            r#"{"ts":"2026-01-01T02:00:10+02:00","component":"du","category":"app_behavior","attrs":{}}"#, "\n",
        );
        let b = parse_events(text);
        assert_eq!(b.events.len(), 3);
        assert_eq!(b.rejects.iter().map(|r| r.line).collect::<Vec<_>>(), [2, 5]);
        let secs: Vec<i64> = b.events.iter().map(|e| e.timestamp.timestamp() % 60).collect();
        assert_eq!(secs, [0, 10, 20]);
    }

    #[test]
    fn unreadable_file() {
        assert!(matches!(ingest_events(Path::new("/nonexistent/events.jsonl")), Err(EventError::FileUnreadable { .. })));
    }

    #[test]
    fn three_in_window_fire_once() {
        let ev = [fail(0, "cu"), fail(10, "cu"), fail(20, "du")];
        let p = correlate(&ev, &[rule(3, 60)]);
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].window_start, p[0].window_end), (t(0), t(20)));
        assert_eq!(p[0].component_ids.len(), 2);
    }

    #[test]
    fn below_threshold_or_outside_window() {
        assert!(correlate(&[fail(0, "cu"), fail(10, "cu")], &[rule(3, 60)]).is_empty());
        assert!(correlate(&[fail(0, "cu"), fail(120, "cu")], &[rule(2, 60)]).is_empty());
    }

    #[test]
    fn later_matches_extend_then_refire_after_window() {
        let ev = [fail(0, "a"), fail(10, "a"), fail(30, "a"), fail(60, "a"), fail(61, "a"), fail(70, "a")];
        let p = correlate(&ev, &[rule(2, 60)]);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].matched.len(), 4);
        assert_eq!(p[1].matched.len(), 2);
        for pat in &p {
            assert!(within(Duration::from_secs(60), pat.window_start, pat.window_end));
        }
    }

    #[test]
    fn predicate_filters() {
        let mut ok = fail(5, "cu");
        ok.attributes.insert("result".into(), "success".into());
        assert!(correlate(&[fail(0, "cu"), ok, fail(10, "cu")], &[rule(3, 60)]).is_empty());
        assert!(rule(0, 1).validate().is_err());
        assert!(rule(1, 0).validate().is_err());
    }

    #[test]
    fn triggers_carry_rule_and_count() {
        let p = correlate(&[fail(0, "cu"), fail(10, "cu"), fail(20, "cu")], &[rule(3, 60)]);
        let tr = raise_triggers(&p, t(30));
        assert_eq!(tr.len(), 1);
        match &tr[0] {
            Trigger::RuntimeEvent { summary, .. } => {
                assert!(summary.contains("auth-fail-burst"));
                assert!(summary.contains("matched 3 events"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(raise_triggers(&[], t(0)).is_empty());
    }
}
