use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::compliance_loop::{run_compliance_loop, LoopError, LoopOutcome};
use super::{AgentError, AgentOptions, Agents, RetrievalMode};
use crate::events::EventPattern;
use crate::knowledge_base::{ChunkSource, IngestOptions, KnowledgeStore, SpecDocument};
use crate::policy_hub::{ChangeEvent, ChangeKind};

/// A detected source change plus the extracted document for New and Updated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyChange {
    pub event: ChangeEvent,
    pub document: Option<SpecDocument>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerKind {
    PolicyUpdate,
    CodeSubmission,
    RuntimeEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Trigger {
    PolicyUpdate { changes: Vec<PolicyChange>, received_at: DateTime<Utc> },
    CodeSubmission { component_id: String, config_text: String, received_at: DateTime<Utc> },
    RuntimeEvent { pattern: EventPattern, summary: String, received_at: DateTime<Utc> },
}

impl Trigger {
    pub fn kind(&self) -> TriggerKind {
        match self {
            Trigger::PolicyUpdate { .. } => TriggerKind::PolicyUpdate,
            Trigger::CodeSubmission { .. } => TriggerKind::CodeSubmission,
            Trigger::RuntimeEvent { .. } => TriggerKind::RuntimeEvent,
        }
    }

    pub fn received_at(&self) -> DateTime<Utc> {
        match self {
            Trigger::PolicyUpdate { received_at, .. }
            | Trigger::CodeSubmission { received_at, .. }
            | Trigger::RuntimeEvent { received_at, .. } => *received_at,
        }
    }
}

pub struct DispatchContext<'a> {
    pub agents: &'a Agents,
    pub options: &'a AgentOptions,
    pub mode: RetrievalMode,
    pub store: &'a mut KnowledgeStore,
    pub ingest: &'a IngestOptions,
    /// Registered component id to its current configuration text.
    pub components: &'a BTreeMap<String, String>,
    pub last_verified: &'a BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct DispatchedRun {
    pub component_id: String,
    pub outcome: Result<LoopOutcome, LoopError>,
}

fn run_for(ctx: &DispatchContext<'_>, component_id: &str, config_text: &str, event_context: Option<&str>) -> DispatchedRun {
    let store = if ctx.mode == RetrievalMode::NoRag { None } else { Some(&*ctx.store) };
    let outcome = run_compliance_loop(
        ctx.agents,
        ctx.options,
        ctx.mode,
        config_text,
        store,
        ctx.last_verified.get(component_id).map(String::as_str),
        event_context,
    );
    DispatchedRun { component_id: component_id.to_string(), outcome }
}

fn apply_policy_changes(ctx: &mut DispatchContext<'_>, changes: &[PolicyChange]) -> Result<(), AgentError> {
    for change in changes {
        match (change.event.change, &change.document) {
            (ChangeKind::Removed, _) => {
                let n = ctx.store.mark_stale(&change.event.filename);
                tracing::info!(file = %change.event.filename, chunks = n, "marked stale");
            }
            (_, Some(doc)) => {
                ctx.store.ingest_documents(std::slice::from_ref(doc), ctx.agents.embedder.as_ref(), ctx.ingest, ChunkSource::Spec)?;
            }
            (_, None) => {
                return Err(AgentError::InvalidInput(format!("{} change without a document", change.event.filename)));
            }
        }
    }
    Ok(())
}

/// Routes a trigger to loop runs. Policy updates re-ingest first and then
/// re-assess every registered component; runtime events append the pattern
/// summary to each affected component's assessment context.
pub fn dispatch_trigger(ctx: &mut DispatchContext<'_>, trigger: &Trigger) -> Result<Vec<DispatchedRun>, AgentError> {
    match trigger {
        Trigger::PolicyUpdate { changes, .. } => {
            apply_policy_changes(ctx, changes)?;
            Ok(ctx.components.iter().map(|(id, cfg)| run_for(ctx, id, cfg, None)).collect())
        }
        Trigger::CodeSubmission { component_id, config_text, .. } => Ok(vec![run_for(ctx, component_id, config_text, None)]),
        Trigger::RuntimeEvent { pattern, summary, .. } => {
            if let Some(unknown) = pattern.component_ids.iter().find(|c| !ctx.components.contains_key(*c)) {
                return Err(AgentError::TriggerRejected(format!("component {unknown} is not registered")));
            }
            if pattern.component_ids.is_empty() {
                return Err(AgentError::TriggerRejected("pattern names no components".into()));
            }
            Ok(pattern.component_ids.iter().map(|id| run_for(ctx, id, &ctx.components[id], Some(summary))).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;
    use std::sync::Arc;

    use super::*;
    use crate::knowledge_base::extract;
    use crate::llm_provider::{MockEmbedder, ScriptedProvider};

    const CONFIG: &str = "security = {\n  drb_integrity = \"yes\";\n};\n";
    const OK: &str = "Compliance Status: Compliant\nViolations Found\nNone\n";
    const CLEAN: &str = r#"{"OverallAssessment": "ok", "Issues": [], "MustFixSummary": []}"#;

    fn agents() -> (Agents, Arc<ScriptedProvider>) {
        let a = Arc::new(ScriptedProvider::from_fn("a", |_| Ok(OK.to_string())));
        let agents = Agents {
            assessor: a.clone(),
            reflector: Arc::new(ScriptedProvider::from_fn("r", |_| Ok(CLEAN.to_string()))),
            query_generator: a.clone(),
            embedder: Arc::new(MockEmbedder::default()),
        };
        (agents, a)
    }

    fn event(filename: &str, change: ChangeKind) -> ChangeEvent {
        ChangeEvent {
            source_id: "s".into(),
            filename: filename.into(),
            change,
            old_hash: None,
            new_hash: Some("h".into()),
            detected_at: Utc::now(),
        }
    }

    fn pattern(components: &[&str]) -> EventPattern {
        EventPattern {
            rule_id: "r1".into(),
            matched: Vec::new(),
            window_start: Utc::now(),
            window_end: Utc::now(),
            component_ids: components.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
        }
    }

    #[test]
    fn routes_each_trigger_kind() {
        let (agents, assessor) = agents();
        let e = MockEmbedder::default();
        let mut store = KnowledgeStore::for_provider(&e);
        let components = BTreeMap::from([("cu".to_string(), CONFIG.to_string()), ("du".to_string(), CONFIG.to_string())]);
        let verified = BTreeMap::new();
        let ingest = IngestOptions::default();
        let options = AgentOptions::default();
        let mut ctx = DispatchContext {
            agents: &agents,
            options: &options,
            mode: RetrievalMode::PlainRag,
            store: &mut store,
            ingest: &ingest,
            components: &components,
            last_verified: &verified,
        };

        let doc = extract("Integrity protection shall be enabled.", "ts.md").unwrap();
        let update = Trigger::PolicyUpdate {
            changes: vec![PolicyChange { event: event("ts.md", ChangeKind::New), document: Some(doc) }],
            received_at: Utc::now(),
        };
        let runs = dispatch_trigger(&mut ctx, &update).unwrap();
        assert_eq!(runs.len(), 2);
        assert!(runs.iter().all(|r| r.outcome.as_ref().unwrap().converged()));
        assert_eq!(ctx.store.live_len(), 1);

        let submit = Trigger::CodeSubmission { component_id: "new".into(), config_text: CONFIG.into(), received_at: Utc::now() };
        assert_eq!(dispatch_trigger(&mut ctx, &submit).unwrap().len(), 1);

        let runtime = Trigger::RuntimeEvent { pattern: pattern(&["cu"]), summary: "rule r1 matched 3".into(), received_at: Utc::now() };
        assert_eq!(dispatch_trigger(&mut ctx, &runtime).unwrap().len(), 1);
        let last = assessor.received().last().unwrap().clone();
        assert!(last.iter().any(|m| m.content.contains("rule r1 matched 3")));

        let unknown = Trigger::RuntimeEvent { pattern: pattern(&["cu", "ghost"]), summary: String::new(), received_at: Utc::now() };
        assert!(matches!(dispatch_trigger(&mut ctx, &unknown), Err(AgentError::TriggerRejected(_))));

        let removed = Trigger::PolicyUpdate {
            changes: vec![PolicyChange { event: event("ts.md", ChangeKind::Removed), document: None }],
            received_at: Utc::now(),
        };
        dispatch_trigger(&mut ctx, &removed).unwrap();
        assert_eq!(ctx.store.live_len(), 0);
        assert_eq!(update.kind(), TriggerKind::PolicyUpdate);
    }
}
