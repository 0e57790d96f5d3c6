//! Gating, applying, rolling back and auditing configuration remediations.

mod adapter;
mod audit;
mod store;

pub use adapter::{AdapterError, FaultInjector, FilesystemAdapter, RecordingAdapter, TargetAdapter};
pub use audit::{verify_audit_chain, verify_audit_text, AuditKind, AuditLog, AuditRecord, ChainVerdict, GENESIS_HASH};
pub use store::{remediation_document, ActionStore, Clock};

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{ComplianceReport, LoopStatus, ReflectionFeedback};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnforcementPolicy {
    pub require_human_approval: bool,
    pub auto_apply: bool,
    pub rollback_enabled: bool,
    /// Ingest applied remediations back into the knowledge base.
    pub feedback_enabled: bool,
}

impl Default for EnforcementPolicy {
    fn default() -> Self {
        Self { require_human_approval: true, auto_apply: false, rollback_enabled: true, feedback_enabled: true }
    }
}

impl EnforcementPolicy {
    pub fn validate(&self) -> Result<(), EnforcementError> {
        if self.auto_apply && self.require_human_approval {
            return Err(EnforcementError::InvalidPolicy("auto_apply requires require_human_approval = false".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionState {
    Pending,
    Approved,
    Rejected,
    Applied,
    RolledBack,
    Failed,
}

impl ActionState {
    pub fn can_transition(self, to: ActionState) -> bool {
        use ActionState::*;
        matches!((self, to), (Pending, Approved | Rejected) | (Approved, Applied | Failed) | (Applied, RolledBack))
    }

    /// Still awaiting a decision or an apply.
    pub fn in_flight(self) -> bool {
        matches!(self, ActionState::Pending | ActionState::Approved)
    }
}

impl fmt::Display for ActionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", content = "name")]
pub enum DecidedBy {
    Operator(String),
    AutoPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Approve,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateChange {
    pub from: Option<ActionState>,
    pub to: ActionState,
    pub at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingAction {
    pub action_id: String,
    pub component_id: String,
    /// Configuration the assessment ran on.
    pub original_config: String,
    /// None for escalated runs that produced no correction.
    pub proposed_config: Option<String>,
    pub report: ComplianceReport,
    pub loop_outcome_ref: String,
    pub loop_status: LoopStatus,
    pub needs_arbitration: bool,
    pub reflection_history: Vec<ReflectionFeedback>,
    pub state: ActionState,
    pub created_at: DateTime<Utc>,
    pub decided_at: Option<DateTime<Utc>>,
    pub applied_at: Option<DateTime<Utc>>,
    pub decided_by: Option<DecidedBy>,
    pub history: Vec<StateChange>,
    pub failure: Option<String>,
}

impl PendingAction {
    /// True when `history` walks the legal transition graph from Pending
    /// and ends at `state`.
    pub fn history_is_legal(&self) -> bool {
        let mut current: Option<ActionState> = None;
        for step in &self.history {
            let ok = match (current, step.from) {
                (None, None) => step.to == ActionState::Pending,
                (Some(c), Some(f)) => c == f && f.can_transition(step.to),
                _ => false,
            };
            if !ok {
                return false;
            }
            current = Some(step.to);
        }
        current == Some(self.state)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnforcementError {
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("component {component_id} already has action {action_id} in flight")]
    DuplicateInFlight { component_id: String, action_id: String },
    #[error("action {action_id}: cannot move from {from} to {to}")]
    InvalidTransition { action_id: String, from: ActionState, to: ActionState },
    #[error("policy violation: {0}")]
    PolicyViolation(String),
    #[error("no safe snapshot for component {0}")]
    NoSafeSnapshot(String),
    #[error("action {0} has no proposed configuration")]
    NothingToApply(String),
    #[error("apply of {action_id} failed ({message}); previous configuration restored: {restored}")]
    ApplyFailed { action_id: String, message: String, restored: bool },
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("audit chain broken at record {0}")]
    AuditBroken(u64),
    #[error("I/O error: {0}")]
    Io(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_graph() {
        use ActionState::*;
        let all = [Pending, Approved, Rejected, Applied, RolledBack, Failed];
        let legal: Vec<(ActionState, ActionState)> =
            all.iter().flat_map(|a| all.iter().map(move |b| (*a, *b))).filter(|(a, b)| a.can_transition(*b)).collect();
        assert_eq!(
            legal,
            [(Pending, Approved), (Pending, Rejected), (Approved, Applied), (Approved, Failed), (Applied, RolledBack)]
        );
    }

    #[test]
    fn policy_validation() {
        assert!(EnforcementPolicy::default().validate().is_ok());
        let bad = EnforcementPolicy { auto_apply: true, ..EnforcementPolicy::default() };
        assert!(bad.validate().is_err());
        let auto = EnforcementPolicy { auto_apply: true, require_human_approval: false, ..EnforcementPolicy::default() };
        assert!(auto.validate().is_ok());
    }
}
