use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    ActionState, AdapterError, AuditKind, AuditLog, AuditRecord, ChainVerdict, DecidedBy, EnforcementError, EnforcementPolicy,
    PendingAction, StateChange, TargetAdapter, Verdict,
};
use crate::agents::{ComplianceStatus, LoopOutcome, LoopStatus};
use crate::config_model::{diff_configs, parse_config, ROOT_PATH_LABEL};
use crate::digest::short_id;
use crate::knowledge_base::{extract_at, ChunkSource, IngestOptions, IngestSummary, KnowledgeStore, SpecDocument};
use crate::llm_provider::EmbeddingProvider;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SafeSnapshot {
    component_id: String,
    action_id: String,
    content: String,
}

/// Single-writer action state machine. Every mutation is one audit record
/// carrying the resulting action, so the state can be rebuilt from the log.
pub struct ActionStore {
    policy: EnforcementPolicy,
    actions: BTreeMap<String, PendingAction>,
    order: Vec<String>,
    last_safe: BTreeMap<String, SafeSnapshot>,
    audit: AuditLog,
    clock: Clock,
}

impl ActionStore {
    pub fn in_memory(policy: EnforcementPolicy) -> Result<Self, EnforcementError> {
        Self::from_log(policy, AuditLog::in_memory())
    }

    /// Opens the audit log at `path` and rebuilds actions and snapshots from it.
    pub fn open(path: &Path, policy: EnforcementPolicy) -> Result<Self, EnforcementError> {
        Self::from_log(policy, AuditLog::open(path)?)
    }

    fn from_log(policy: EnforcementPolicy, audit: AuditLog) -> Result<Self, EnforcementError> {
        policy.validate()?;
        let mut store = Self {
            policy,
            actions: BTreeMap::new(),
            order: Vec::new(),
            last_safe: BTreeMap::new(),
            audit: AuditLog::in_memory(),
            clock: Arc::new(Utc::now),
        };
        for r in audit.records() {
            store.replay(&r.payload)?;
        }
        store.audit = audit;
        Ok(store)
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    fn replay(&mut self, payload: &Value) -> Result<(), EnforcementError> {
        let corrupt = |e: serde_json::Error| EnforcementError::Io(format!("audit payload: {e}"));
        if let Some(a) = payload.get("action") {
            let action: PendingAction = serde_json::from_value(a.clone()).map_err(corrupt)?;
            if !self.actions.contains_key(&action.action_id) {
                self.order.push(action.action_id.clone());
            }
            self.actions.insert(action.action_id.clone(), action);
        }
        if let Some(s) = payload.get("last_safe") {
            let snap: SafeSnapshot = serde_json::from_value(s.clone()).map_err(corrupt)?;
            self.last_safe.insert(snap.component_id.clone(), snap);
        }
        if let Some(c) = payload.get("cleared_safe").and_then(Value::as_str) {
            self.last_safe.remove(c);
        }
        Ok(())
    }

    fn record(&mut self, kind: AuditKind, payload: Value) -> Result<(), EnforcementError> {
        let now = (self.clock)();
        self.audit.append(now, kind, payload.clone())?;
        self.replay(&payload)
    }

    fn action_payload(action: &PendingAction) -> Value {
        json!({
            "component_id": action.component_id,
            "action_id": action.action_id,
            "state": action.state,
            "action": action,
        })
    }

    pub fn policy(&self) -> &EnforcementPolicy {
        &self.policy
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn verify_audit(&self) -> ChainVerdict {
        self.audit.verify()
    }

    pub fn get(&self, action_id: &str) -> Option<&PendingAction> {
        self.actions.get(action_id)
    }

    /// Actions in creation order.
    pub fn actions(&self) -> impl Iterator<Item = &PendingAction> {
        self.order.iter().map(|id| &self.actions[id])
    }

    pub fn pending(&self) -> Vec<&PendingAction> {
        self.actions().filter(|a| a.state == ActionState::Pending).collect()
    }

    pub fn in_flight_for(&self, component_id: &str) -> Option<&PendingAction> {
        self.actions().find(|a| a.component_id == component_id && a.state.in_flight())
    }

    pub fn last_safe(&self, component_id: &str) -> Option<&str> {
        self.last_safe.get(component_id).map(|s| s.content.as_str())
    }

    /// Audit records that name `component_id`, oldest first.
    pub fn history(&self, component_id: &str) -> Vec<&AuditRecord> {
        self.audit.records().iter().filter(|r| r.component_id() == Some(component_id)).collect()
    }

    fn transition(&self, action_id: &str, to: ActionState) -> Result<PendingAction, EnforcementError> {
        let action = self.actions.get(action_id).ok_or_else(|| EnforcementError::UnknownAction(action_id.to_string()))?;
        if !action.state.can_transition(to) {
            return Err(EnforcementError::InvalidTransition { action_id: action_id.to_string(), from: action.state, to });
        }
        let mut next = action.clone();
        next.history.push(StateChange { from: Some(action.state), to, at: (self.clock)() });
        next.state = to;
        Ok(next)
    }

    /// Records a completed loop. Non-compliant or escalated outcomes become a
    /// Pending action; a converged compliant outcome records the assessment only.
    pub fn submit(
        &mut self,
        component_id: &str,
        original_config: &str,
        outcome: &LoopOutcome,
    ) -> Result<Option<PendingAction>, EnforcementError> {
        let outcome_ref = short_id(serde_json::to_vec(outcome).expect("loop outcome serializes"));
        let mut payload = json!({
            "component_id": component_id,
            "status": outcome.final_report.status,
            "outcome": outcome.outcome,
            "iterations_used": outcome.iterations_used,
            "loop_outcome_ref": outcome_ref,
        });
        let actionable = outcome.outcome == LoopStatus::Escalated || outcome.final_report.status == ComplianceStatus::NonCompliant;
        if !actionable {
            self.record(AuditKind::AssessmentCompleted, payload)?;
            return Ok(None);
        }
        if let Some(existing) = self.in_flight_for(component_id) {
            return Err(EnforcementError::DuplicateInFlight {
                component_id: component_id.to_string(),
                action_id: existing.action_id.clone(),
            });
        }
        let now = (self.clock)();
        let proposed = outcome.final_report.corrected_config.clone();
        let action_id = short_id(format!(
            "{component_id}\n{}\n{}\n{}",
            proposed.as_deref().unwrap_or(""),
            now.to_rfc3339(),
            self.audit.len()
        ));
        let action = PendingAction {
            action_id: action_id.clone(),
            component_id: component_id.to_string(),
            original_config: original_config.to_string(),
            proposed_config: proposed,
            report: outcome.final_report.clone(),
            loop_outcome_ref: outcome_ref,
            loop_status: outcome.outcome,
            needs_arbitration: outcome.outcome == LoopStatus::Escalated,
            reflection_history: outcome.reflection_history.clone(),
            state: ActionState::Pending,
            created_at: now,
            decided_at: None,
            applied_at: None,
            decided_by: None,
            history: vec![StateChange { from: None, to: ActionState::Pending, at: now }],
            failure: None,
        };
        payload["action_id"] = json!(action_id);
        payload["state"] = json!(ActionState::Pending);
        payload["action"] = json!(action);
        self.record(AuditKind::AssessmentCompleted, payload)?;
        Ok(Some(action))
    }

    pub fn decide(&mut self, action_id: &str, verdict: Verdict, operator: &str) -> Result<PendingAction, EnforcementError> {
        let to = match verdict {
            Verdict::Approve => ActionState::Approved,
            Verdict::Reject => ActionState::Rejected,
        };
        let mut next = self.transition(action_id, to)?;
        next.decided_at = Some((self.clock)());
        next.decided_by = Some(DecidedBy::Operator(operator.to_string()));
        self.record(AuditKind::ActionDecided, Self::action_payload(&next))?;
        Ok(next)
    }

    fn fail(&mut self, mut action: PendingAction, message: String, restored: bool) -> Result<PendingAction, EnforcementError> {
        action.history.push(StateChange { from: Some(action.state), to: ActionState::Failed, at: (self.clock)() });
        action.state = ActionState::Failed;
        action.failure = Some(message.clone());
        let mut payload = Self::action_payload(&action);
        payload["restored"] = json!(restored);
        self.record(AuditKind::ActionApplied, payload)?;
        tracing::warn!(action = %action.action_id, %message, restored, "apply failed");
        Err(EnforcementError::ApplyFailed { action_id: action.action_id, message, restored })
    }

    /// Writes the proposed configuration and verifies it by reading it back.
    /// Any failure restores the previous configuration and marks the action
    /// Failed. A Pending action is applied directly only under `auto_apply`.
    pub fn apply(&mut self, action_id: &str, adapter: &dyn TargetAdapter) -> Result<PendingAction, EnforcementError> {
        let state = self.get(action_id).ok_or_else(|| EnforcementError::UnknownAction(action_id.to_string()))?.state;
        if state == ActionState::Pending {
            if !self.policy.auto_apply {
                return Err(EnforcementError::PolicyViolation(format!("action {action_id} needs operator approval")));
            }
            let mut approved = self.transition(action_id, ActionState::Approved)?;
            approved.decided_at = Some((self.clock)());
            approved.decided_by = Some(DecidedBy::AutoPolicy);
            self.record(AuditKind::ActionDecided, Self::action_payload(&approved))?;
        }
        let action = self.transition(action_id, ActionState::Applied)?;
        let Some(proposed) = action.proposed_config.clone() else {
            return Err(EnforcementError::NothingToApply(action_id.to_string()));
        };
        let component = action.component_id.clone();
        let previous = match adapter.read(&component) {
            Ok(p) => p,
            Err(e) => return self.fail(self.actions[action_id].clone(), e.to_string(), true),
        };
        let written = adapter.write(&component, &proposed).and_then(|_| adapter.read(&component));
        let problem = match written {
            Ok(back) if back == proposed => None,
            Ok(_) => Some("read-back differs from proposed configuration".to_string()),
            Err(e) => Some(e.to_string()),
        };
        if let Some(message) = problem {
            let restored = restore(adapter, &component, &previous).is_ok();
            return self.fail(self.actions[action_id].clone(), message, restored);
        }
        let mut applied = action;
        applied.applied_at = Some((self.clock)());
        let mut payload = Self::action_payload(&applied);
        payload["last_safe"] = json!(SafeSnapshot { component_id: component, action_id: action_id.to_string(), content: previous });
        self.record(AuditKind::ActionApplied, payload)?;
        Ok(applied)
    }

    /// Restores the snapshot taken before the component's last apply.
    pub fn rollback(&mut self, component_id: &str, adapter: &dyn TargetAdapter) -> Result<PendingAction, EnforcementError> {
        if !self.policy.rollback_enabled {
            return Err(EnforcementError::PolicyViolation("rollback is disabled".into()));
        }
        let snap = self.last_safe.get(component_id).cloned().ok_or_else(|| EnforcementError::NoSafeSnapshot(component_id.to_string()))?;
        let next = self
            .transition(&snap.action_id, ActionState::RolledBack)
            .map_err(|_| EnforcementError::NoSafeSnapshot(component_id.to_string()))?;
        restore(adapter, component_id, &snap.content)?;
        let mut payload = Self::action_payload(&next);
        payload["cleared_safe"] = json!(component_id);
        self.record(AuditKind::RollbackPerformed, payload)?;
        Ok(next)
    }

    /// Ingests an applied remediation as a feedback document. Returns None,
    /// logging the reason, when feedback is disabled, the action is not
    /// Applied, or ingestion fails.
    pub fn contribute_feedback(
        &mut self,
        action_id: &str,
        kb: &mut KnowledgeStore,
        embedder: &dyn EmbeddingProvider,
        ingest: &IngestOptions,
    ) -> Result<Option<IngestSummary>, EnforcementError> {
        let action = self.get(action_id).ok_or_else(|| EnforcementError::UnknownAction(action_id.to_string()))?.clone();
        if !self.policy.feedback_enabled || action.state != ActionState::Applied {
            tracing::info!(action = action_id, state = %action.state, "no feedback contributed");
            return Ok(None);
        }
        let doc = match remediation_document(&action, (self.clock)()) {
            Some(d) => d,
            None => return Ok(None),
        };
        match kb.ingest_documents(std::slice::from_ref(&doc), embedder, ingest, ChunkSource::Feedback) {
            Ok(summary) => {
                self.record(
                    AuditKind::PolicyIngested,
                    json!({
                        "component_id": action.component_id,
                        "action_id": action_id,
                        "filename": doc.filename,
                        "content_hash": doc.content_hash,
                        "chunks": summary.chunks,
                    }),
                )?;
                Ok(Some(summary))
            }
            Err(e) => {
                tracing::warn!(action = action_id, error = %e, "feedback ingestion failed");
                Ok(None)
            }
        }
    }

    /// Audits a knowledge-base ingestion driven by a source change.
    pub fn record_policy_ingest(&mut self, payload: Value) -> Result<(), EnforcementError> {
        self.record(AuditKind::PolicyIngested, payload)
    }
}

fn restore(adapter: &dyn TargetAdapter, component_id: &str, content: &str) -> Result<(), AdapterError> {
    adapter.write(component_id, content)?;
    match adapter.read(component_id)? {
        back if back == content => Ok(()),
        _ => Err(AdapterError::Write { component: component_id.to_string(), message: "restore read-back differs".into() }),
    }
}

fn group_text(text: &str, path: &str) -> Option<String> {
    let doc = parse_config(text).ok()?;
    let node = doc.resolve(path)?;
    Some(doc.text_at(node.full_span).to_string())
}

/// The feedback document for an applied action: violation summaries,
/// references, and the touched groups before and after.
pub fn remediation_document(action: &PendingAction, at: DateTime<Utc>) -> Option<SpecDocument> {
    let proposed = action.proposed_config.as_deref()?;
    let mut text = format!("Remediation example for component {} (action {}).\n\n", action.component_id, action.action_id);
    if !action.report.violations.is_empty() {
        text.push_str("Violations:\n");
        for v in &action.report.violations {
            text.push_str(&format!("- {} [{}]\n", v.summary, v.config_path));
        }
        text.push('\n');
    }
    if !action.report.spec_references.is_empty() {
        text.push_str("References:\n");
        for r in &action.report.spec_references {
            text.push_str(&format!("- {} (Filename: {})\n", r.clause, r.filename));
        }
        text.push('\n');
    }
    if let Ok(diff) = diff_configs(&action.original_config, proposed) {
        for path in &diff.touched_group_paths {
            let (before, after) = if path == ROOT_PATH_LABEL {
                let pick = |src: &str, edited: bool| {
                    diff.changed_regions
                        .iter()
                        .map(|r| {
                            let s = if edited { r.edited } else { r.original };
                            &src[s.start..s.end]
                        })
                        .collect::<Vec<_>>()
                        .join("\n")
                };
                (pick(&action.original_config, false), pick(proposed, true))
            } else {
                (
                    group_text(&action.original_config, path).unwrap_or_default(),
                    group_text(proposed, path).unwrap_or_default(),
                )
            };
            text.push_str(&format!("Before ({path}):\n{before}\n\nAfter ({path}):\n{after}\n\n"));
        }
    }
    let filename = format!("remediation-{}.md", action.action_id);
    extract_at(&text, &filename, &format!("enforcement:{}", action.action_id), at).ok()
}
