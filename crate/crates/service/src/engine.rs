//! Shared state behind the HTTP API and the CLI: providers, the knowledge
//! store, the action store and persisted run records.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use ransec_core::agents::{
    dispatch_trigger, run_compliance_loop, Agents, ComplianceStatus, DispatchContext, LoopOutcome, PolicyChange, RetrievalMode, Trigger,
    TriggerKind,
};
use ransec_core::config_model::diff_configs;
use ransec_core::digest::short_id;
use ransec_core::enforcement::{ActionStore, AuditRecord, ChainVerdict, EnforcementError, FilesystemAdapter, PendingAction, Verdict};
use ransec_core::events::{correlate, ingest_events, raise_triggers, EventPattern};
use ransec_core::knowledge_base::{extract, IngestOptions, IngestSummary, KbError, KnowledgeStore};
use ransec_core::llm_provider::{
    ChatProvider, EmbeddingProvider, HttpChatProvider, HttpEmbeddingProvider, MockEmbedder, ReplayProvider, ReqwestTransport, Transcript,
};
use ransec_core::policy_hub::{ChangeEvent, HttpFetcher, HubState, PolicyHub};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ChatSettings, EmbedderSettings, ServiceConfig};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("component {component_id} already has run {run_id} in flight")]
    RunInFlight { component_id: String, run_id: String },
    #[error("no chat backend configured; set [chat] or pass --replay")]
    NoChatBackend,
    #[error(transparent)]
    Enforcement(#[from] EnforcementError),
    #[error(transparent)]
    Knowledge(#[from] KbError),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Io(String),
}

pub type EngineResult<T> = Result<T, EngineError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> EngineError {
    EngineError::Io(format!("{}: {e}", path.display()))
}

pub fn build_embedder(settings: &EmbedderSettings) -> Arc<dyn EmbeddingProvider> {
    match settings {
        EmbedderSettings::Mock { dimension, seed } => Arc::new(MockEmbedder::new(*dimension, *seed)),
        EmbedderSettings::Http { provider, dimension } => {
            Arc::new(HttpEmbeddingProvider::new(provider.clone(), *dimension, Arc::new(ReqwestTransport::new())))
        }
    }
}

/// A replay provider whose model name is taken from the transcript unless given.
pub fn replay_provider(path: &Path, model: Option<&str>) -> EngineResult<Arc<dyn ChatProvider>> {
    let transcript = Transcript::load(path).map_err(|e| EngineError::BadRequest(e.to_string()))?;
    let model = match model {
        Some(m) => m.to_string(),
        None => transcript.records.first().map(|r| r.model.clone()).ok_or_else(|| EngineError::BadRequest(format!("{} is empty", path.display())))?,
    };
    Ok(Arc::new(ReplayProvider::new(model, transcript)))
}

pub fn build_chat(settings: &ChatSettings) -> EngineResult<Option<Arc<dyn ChatProvider>>> {
    Ok(match settings {
        ChatSettings::None => None,
        ChatSettings::Replay { transcript, model } => Some(replay_provider(transcript, model.as_deref())?),
        ChatSettings::Http(config) => Some(Arc::new(HttpChatProvider::new(config.clone(), Arc::new(ReqwestTransport::new())))),
    })
}

/// The persisted store if present, else `corpus` (or the configured corpus)
/// ingested in memory, else an empty store.
pub fn load_knowledge(config: &ServiceConfig, embedder: &dyn EmbeddingProvider, corpus: Option<&Path>) -> EngineResult<KnowledgeStore> {
    let ingest = |dir: &Path| -> EngineResult<KnowledgeStore> {
        let mut store = KnowledgeStore::for_provider(embedder);
        store.ingest_dir(dir, embedder, &IngestOptions::default())?;
        Ok(store)
    };
    if let Some(dir) = corpus {
        return ingest(dir);
    }
    let path = config.knowledge_path();
    if path.exists() {
        return Ok(KnowledgeStore::load(&path)?);
    }
    match &config.corpus_dir {
        Some(dir) => ingest(dir),
        None => Ok(KnowledgeStore::for_provider(embedder)),
    }
}

fn write_atomic(path: &Path, text: &str) -> EngineResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub component_id: String,
    pub trigger: TriggerKind,
    pub mode: RetrievalMode,
    pub config_text: String,
    pub event_context: Option<String>,
    pub submitted_at: DateTime<Utc>,
    pub completed_at: Option<DateTime<Utc>>,
    pub state: RunState,
    pub outcome: Option<LoopOutcome>,
    pub error: Option<String>,
    pub action_id: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LastStatus {
    Compliant,
    NonCompliant,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentStatus {
    pub component_id: String,
    pub last_status: LastStatus,
    pub last_checked_at: Option<DateTime<Utc>>,
    pub static_check_passed: bool,
    pub dynamic_check_passed: bool,
    pub pending_action_id: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    pub original_start: usize,
    pub original_end: usize,
    pub edited_start: usize,
    pub edited_end: usize,
    pub original_text: String,
    pub edited_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionView {
    #[serde(flatten)]
    pub action: PendingAction,
    pub touched_group_paths: Vec<String>,
    pub hunks: Vec<DiffHunk>,
}

impl ActionView {
    pub fn new(action: PendingAction) -> Self {
        let mut view = ActionView { action, touched_group_paths: Vec::new(), hunks: Vec::new() };
        let Some(proposed) = view.action.proposed_config.as_deref() else { return view };
        let original = view.action.original_config.as_str();
        if let Ok(diff) = diff_configs(original, proposed) {
            view.touched_group_paths = diff.touched_group_paths.into_iter().collect();
            view.hunks = diff
                .changed_regions
                .iter()
                .map(|r| DiffHunk {
                    original_start: r.original.start,
                    original_end: r.original.end,
                    edited_start: r.edited.start,
                    edited_end: r.edited.end,
                    original_text: original[r.original.start..r.original.end].to_string(),
                    edited_text: proposed[r.edited.start..r.edited.end].to_string(),
                })
                .collect();
        }
        view
    }
}

pub struct Engine {
    config: ServiceConfig,
    agents: Option<Agents>,
    embedder: Arc<dyn EmbeddingProvider>,
    kb: RwLock<KnowledgeStore>,
    actions: Mutex<ActionStore>,
    runs: Mutex<BTreeMap<String, RunRecord>>,
    adapter: FilesystemAdapter,
    counter: AtomicU64,
}

impl Engine {
    /// Opens persisted state under `data_dir`. Runs that were still in flight
    /// when the previous process stopped are marked failed.
    pub fn open(config: ServiceConfig, chat_override: Option<Arc<dyn ChatProvider>>) -> EngineResult<Self> {
        std::fs::create_dir_all(&config.data_dir).map_err(|e| io_err(&config.data_dir, e))?;
        let embedder = build_embedder(&config.embedder);
        let chat = match chat_override {
            Some(c) => Some(c),
            None => build_chat(&config.chat)?,
        };
        let agents = chat.map(|c| Agents::single(c, embedder.clone()));
        let kb = load_knowledge(&config, embedder.as_ref(), None)?;
        if !config.knowledge_path().exists() && !kb.is_empty() {
            kb.save(&config.knowledge_path())?;
        }
        let actions = ActionStore::open(&config.audit_path(), config.enforcement)?;
        let runs = Self::load_runs(&config.runs_dir())?;
        let adapter = FilesystemAdapter::new(config.components.clone());
        Ok(Self {
            counter: AtomicU64::new(runs.len() as u64),
            config,
            agents,
            embedder,
            kb: RwLock::new(kb),
            actions: Mutex::new(actions),
            runs: Mutex::new(runs),
            adapter,
        })
    }

    fn load_runs(dir: &Path) -> EngineResult<BTreeMap<String, RunRecord>> {
        let mut runs = BTreeMap::new();
        let entries = match std::fs::read_dir(dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(runs),
            Err(e) => return Err(io_err(dir, e)),
        };
        for entry in entries {
            let path = entry.map_err(|e| io_err(dir, e))?.path();
            if path.extension().is_none_or(|x| x != "json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let mut run: RunRecord = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
            if run.state == RunState::Running {
                run.state = RunState::Failed;
                run.error = Some("interrupted by a service restart".into());
                write_atomic(&path, &serde_json::to_string_pretty(&run).expect("run serializes"))?;
            }
            runs.insert(run.run_id.clone(), run);
        }
        Ok(runs)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn persist(&self, run: &RunRecord) -> EngineResult<()> {
        let path = self.config.runs_dir().join(format!("{}.json", run.run_id));
        write_atomic(&path, &serde_json::to_string_pretty(run).expect("run serializes"))
    }

    fn save_kb(&self, kb: &KnowledgeStore) -> EngineResult<()> {
        Ok(kb.save(&self.config.knowledge_path())?)
    }

    pub fn is_registered(&self, component_id: &str) -> bool {
        self.config.components.contains_key(component_id)
    }

    pub fn component_config(&self, component_id: &str) -> EngineResult<String> {
        let path = self.config.components.get(component_id).ok_or_else(|| EngineError::NotFound(format!("component {component_id} is not registered")))?;
        std::fs::read_to_string(path).map_err(|e| io_err(path, e))
    }

    /// Registers a run and returns its id; [`Engine::execute`] performs it.
    pub fn submit(
        &self,
        component_id: &str,
        config_text: &str,
        mode: Option<RetrievalMode>,
        trigger: TriggerKind,
        event_context: Option<String>,
    ) -> EngineResult<String> {
        if component_id.trim().is_empty() {
            return Err(EngineError::BadRequest("component_id is empty".into()));
        }
        if config_text.trim().is_empty() {
            return Err(EngineError::BadRequest("config_text is empty".into()));
        }
        if !self.is_registered(component_id) {
            return Err(EngineError::BadRequest(format!("component {component_id} is not registered")));
        }
        if self.agents.is_none() {
            return Err(EngineError::NoChatBackend);
        }
        let mut runs = self.runs.lock().unwrap();
        if let Some(r) = runs.values().find(|r| r.component_id == component_id && r.state == RunState::Running) {
            return Err(EngineError::RunInFlight { component_id: component_id.to_string(), run_id: r.run_id.clone() });
        }
        let now = Utc::now();
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let run = RunRecord {
            run_id: short_id(format!("{component_id}\n{}\n{n}", now.to_rfc3339())),
            component_id: component_id.to_string(),
            trigger,
            mode: mode.unwrap_or(self.config.default_mode),
            config_text: config_text.to_string(),
            event_context,
            submitted_at: now,
            completed_at: None,
            state: RunState::Running,
            outcome: None,
            error: None,
            action_id: None,
        };
        self.persist(&run)?;
        let id = run.run_id.clone();
        runs.insert(id.clone(), run);
        Ok(id)
    }

    fn prior_verified(&self, component_id: &str) -> Option<String> {
        let runs = self.runs.lock().unwrap();
        runs.values()
            .filter(|r| r.component_id == component_id && r.state == RunState::Completed)
            .filter_map(|r| Some((r.completed_at?, r.outcome.as_ref()?.last_verified_compliant.clone()?)))
            .max_by_key(|(at, _)| *at)
            .map(|(_, v)| v)
    }

    /// Runs the loop for a submitted run and records the outcome with the
    /// action store. The run record ends Completed or Failed.
    pub fn execute(&self, run_id: &str) -> EngineResult<RunRecord> {
        let run = self.run(run_id).ok_or_else(|| EngineError::NotFound(format!("run {run_id}")))?;
        let agents = self.agents.as_ref().ok_or(EngineError::NoChatBackend)?;
        let prior = self.prior_verified(&run.component_id);
        let result = {
            let kb = self.kb.read().unwrap();
            let store = (run.mode != RetrievalMode::NoRag).then_some(&*kb);
            run_compliance_loop(agents, &self.config.agent, run.mode, &run.config_text, store, prior.as_deref(), run.event_context.as_deref())
        };
        let mut done = run.clone();
        done.completed_at = Some(Utc::now());
        match result {
            Ok(outcome) => {
                let mut actions = self.actions.lock().unwrap();
                match actions.submit(&run.component_id, &run.config_text, &outcome) {
                    Ok(action) => {
                        let auto = action.as_ref().is_some_and(|a| self.config.enforcement.auto_apply && !a.needs_arbitration);
                        done.action_id = action.map(|a| a.action_id);
                        if let (Some(id), true) = (&done.action_id, auto) {
                            if let Err(e) = self.apply_and_learn(&mut actions, id) {
                                done.error = Some(e.to_string());
                            }
                        }
                    }
                    Err(e) => {
                        tracing::warn!(run = %run_id, error = %e, "outcome not turned into an action");
                        done.error = Some(e.to_string());
                    }
                }
                done.state = RunState::Completed;
                done.outcome = Some(outcome);
            }
            Err(e) => {
                tracing::warn!(run = %run_id, error = %e, "run failed");
                done.state = RunState::Failed;
                done.error = Some(e.to_string());
            }
        }
        self.persist(&done)?;
        self.runs.lock().unwrap().insert(done.run_id.clone(), done.clone());
        Ok(done)
    }

    pub fn run(&self, run_id: &str) -> Option<RunRecord> {
        self.runs.lock().unwrap().get(run_id).cloned()
    }

    pub fn pending(&self) -> Vec<ActionView> {
        self.actions.lock().unwrap().pending().into_iter().cloned().map(ActionView::new).collect()
    }

    pub fn action(&self, action_id: &str) -> Option<ActionView> {
        self.actions.lock().unwrap().get(action_id).cloned().map(ActionView::new)
    }

    /// Approval applies the change right away and feeds it back into the
    /// knowledge base when the policy allows.
    pub fn decide(&self, action_id: &str, verdict: Verdict, operator: &str) -> EngineResult<ActionView> {
        if operator.trim().is_empty() {
            return Err(EngineError::BadRequest("operator is empty".into()));
        }
        let mut actions = self.actions.lock().unwrap();
        let decided = actions.decide(action_id, verdict, operator)?;
        if verdict == Verdict::Reject {
            return Ok(ActionView::new(decided));
        }
        self.apply_and_learn(&mut actions, action_id)?;
        Ok(ActionView::new(actions.get(action_id).cloned().expect("decided action exists")))
    }

    /// A failed apply is recorded by the store and reported through the action state.
    fn apply_and_learn(&self, actions: &mut ActionStore, action_id: &str) -> EngineResult<()> {
        match actions.apply(action_id, &self.adapter) {
            Ok(_) => {
                let mut kb = self.kb.write().unwrap();
                if let Some(summary) = actions.contribute_feedback(action_id, &mut kb, self.embedder.as_ref(), &IngestOptions::default())? {
                    tracing::info!(action = %action_id, chunks = summary.chunks, "remediation ingested");
                    self.save_kb(&kb)?;
                }
            }
            Err(EnforcementError::ApplyFailed { message, restored, .. }) => {
                tracing::warn!(action = %action_id, %message, restored, "apply failed");
            }
            Err(EnforcementError::NothingToApply(_)) => {}
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    pub fn rollback(&self, component_id: &str) -> EngineResult<ActionView> {
        if !self.is_registered(component_id) {
            return Err(EngineError::NotFound(format!("component {component_id} is not registered")));
        }
        let action = self.actions.lock().unwrap().rollback(component_id, &self.adapter)?;
        Ok(ActionView::new(action))
    }

    fn known_components(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.config.components.keys().cloned().collect();
        for r in self.runs.lock().unwrap().values() {
            if !ids.contains(&r.component_id) {
                ids.push(r.component_id.clone());
            }
        }
        ids.sort();
        ids
    }

    pub fn components(&self) -> Vec<ComponentStatus> {
        let runs = self.runs.lock().unwrap();
        let actions = self.actions.lock().unwrap();
        let ids: Vec<String> = {
            let mut ids: Vec<String> = self.config.components.keys().cloned().collect();
            ids.extend(runs.values().map(|r| r.component_id.clone()));
            ids.sort();
            ids.dedup();
            ids
        };
        ids.into_iter()
            .map(|id| {
                let mut done: Vec<&RunRecord> = runs.values().filter(|r| r.component_id == id && r.state == RunState::Completed).collect();
                done.sort_by_key(|r| (r.completed_at, r.run_id.clone()));
                let compliant = |r: &&RunRecord| r.outcome.as_ref().is_some_and(|o| o.converged() && o.final_report.status == ComplianceStatus::Compliant);
                let latest_of = |dynamic: bool| done.iter().rev().find(|r| (r.trigger == TriggerKind::RuntimeEvent) == dynamic);
                let last = done.last();
                ComponentStatus {
                    last_status: match last.and_then(|r| r.outcome.as_ref()).map(|o| o.final_report.status) {
                        Some(ComplianceStatus::Compliant) => LastStatus::Compliant,
                        Some(ComplianceStatus::NonCompliant) => LastStatus::NonCompliant,
                        None => LastStatus::Unknown,
                    },
                    last_checked_at: last.and_then(|r| r.completed_at),
                    static_check_passed: latest_of(false).is_some_and(compliant),
                    dynamic_check_passed: latest_of(true).is_some_and(compliant),
                    pending_action_id: actions.in_flight_for(&id).map(|a| a.action_id.clone()),
                    component_id: id,
                }
            })
            .collect()
    }

    pub fn history(&self, component_id: &str) -> EngineResult<Vec<AuditRecord>> {
        let records: Vec<AuditRecord> = self.actions.lock().unwrap().history(component_id).into_iter().cloned().collect();
        if records.is_empty() && !self.known_components().iter().any(|c| c == component_id) {
            return Err(EngineError::NotFound(format!("component {component_id}")));
        }
        Ok(records)
    }

    pub fn ingest_dir(&self, dir: &Path) -> EngineResult<IngestSummary> {
        let summary = {
            let mut kb = self.kb.write().unwrap();
            let summary = kb.ingest_dir(dir, self.embedder.as_ref(), &IngestOptions::default())?;
            self.save_kb(&kb)?;
            summary
        };
        self.actions
            .lock()
            .unwrap()
            .record_policy_ingest(json!({"source": dir.display().to_string(), "documents": summary.documents, "chunks": summary.chunks}))?;
        Ok(summary)
    }

    pub fn knowledge_len(&self) -> usize {
        self.kb.read().unwrap().live_len()
    }

    /// One pass over the policy sources. Changes are ingested, then every
    /// registered component is re-assessed when `reassess` is set.
    pub fn hub_poll(&self, reassess: bool) -> EngineResult<(Vec<ChangeEvent>, Vec<RunRecord>)> {
        let state = HubState::load(&self.config.hub_state_path()).map_err(|e| EngineError::Io(e.to_string()))?;
        let fetcher = Arc::new(HttpFetcher::new(Arc::new(ReqwestTransport::new()), Duration::from_secs(60)));
        let mut hub = PolicyHub::new(self.config.policy_sources.clone(), state, fetcher).map_err(|e| EngineError::BadRequest(e.to_string()))?;
        let mut changes = Vec::new();
        let report = hub.poll_once(|event, content| {
            let document = content.map(|c| extract(c, &event.filename).map_err(|e| e.to_string())).transpose()?;
            changes.push(PolicyChange { event: event.clone(), document });
            Ok(())
        });
        for (source, error) in &report.source_errors {
            tracing::warn!(%source, %error, "policy source skipped");
        }
        if !changes.is_empty() {
            let mut kb = self.kb.write().unwrap();
            let none = BTreeMap::new();
            let fallback;
            let agents = match &self.agents {
                Some(a) => a,
                None => {
                    fallback = Agents::single(Arc::new(NoChat), self.embedder.clone());
                    &fallback
                }
            };
            let mut ctx = DispatchContext {
                agents,
                options: &self.config.agent,
                mode: self.config.default_mode,
                store: &mut kb,
                ingest: &IngestOptions::default(),
                components: &none,
                last_verified: &none,
            };
            dispatch_trigger(&mut ctx, &Trigger::PolicyUpdate { changes: changes.clone(), received_at: Utc::now() })
                .map_err(|e| EngineError::Domain(e.to_string()))?;
            self.save_kb(&kb)?;
            drop(kb);
            let summary: Vec<_> = changes.iter().map(|c| json!({"source_id": c.event.source_id, "filename": c.event.filename, "change": c.event.change})).collect();
            self.actions.lock().unwrap().record_policy_ingest(json!({"changes": summary}))?;
        }
        hub.state().save(&self.config.hub_state_path()).map_err(|e| EngineError::Io(e.to_string()))?;
        let mut runs = Vec::new();
        if reassess && !changes.is_empty() {
            for id in self.config.components.keys() {
                self.reassess(id, TriggerKind::PolicyUpdate, None, &mut runs);
            }
        }
        Ok((changes.into_iter().map(|c| c.event).collect(), runs))
    }

    /// Runs the loop on the component's current file. Failures are logged so
    /// one unreadable or busy component does not stop the others.
    fn reassess(&self, component_id: &str, trigger: TriggerKind, event_context: Option<String>, runs: &mut Vec<RunRecord>) {
        let result = self
            .component_config(component_id)
            .and_then(|config| self.submit(component_id, &config, None, trigger, event_context))
            .and_then(|run_id| self.execute(&run_id));
        match result {
            Ok(run) => runs.push(run),
            Err(e) => tracing::warn!(component = %component_id, error = %e, "re-assessment skipped"),
        }
    }

    /// Correlates an event file with the configured rules; with `dispatch`
    /// each pattern re-assesses its components with the pattern as context.
    pub fn events_ingest(&self, path: &Path, dispatch: bool) -> EngineResult<(usize, Vec<EventPattern>, Vec<RunRecord>)> {
        let batch = ingest_events(path).map_err(|e| EngineError::BadRequest(e.to_string()))?;
        for r in &batch.rejects {
            tracing::warn!(line = r.line, reason = %r.reason, "event line rejected");
        }
        let patterns = correlate(&batch.events, &self.config.correlation_rules);
        let mut runs = Vec::new();
        if dispatch {
            for t in raise_triggers(&patterns, Utc::now()) {
                let Trigger::RuntimeEvent { pattern, summary, .. } = t else { continue };
                if let Some(unknown) = pattern.component_ids.iter().find(|c| !self.is_registered(c)) {
                    tracing::warn!(rule = %pattern.rule_id, component = %unknown, "pattern names an unregistered component, skipped");
                    continue;
                }
                for id in &pattern.component_ids {
                    self.reassess(id, TriggerKind::RuntimeEvent, Some(summary.clone()), &mut runs);
                }
            }
        }
        Ok((batch.rejects.len(), patterns, runs))
    }

    pub fn audit_intact(&self) -> bool {
        self.actions.lock().unwrap().verify_audit() == ChainVerdict::Intact
    }
}

/// Stands in for a chat backend where none is needed.
struct NoChat;

impl ChatProvider for NoChat {
    fn model_name(&self) -> &str {
        "none"
    }

    fn chat(&self, _messages: &[ransec_core::llm_provider::Message]) -> Result<ransec_core::llm_provider::ChatExchange, ransec_core::llm_provider::ProviderError> {
        Err(ransec_core::llm_provider::ProviderError::InvalidConfig("no chat backend configured".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ransec_core::agents::{parse_report, LoopStatus};
    use ransec_core::enforcement::{ActionState, StateChange};

    fn action(original: &str, proposed: Option<&str>) -> PendingAction {
        let at = Utc::now();
        PendingAction {
            action_id: "a1".into(),
            component_id: "cu".into(),
            original_config: original.into(),
            proposed_config: proposed.map(str::to_string),
            report: parse_report("Compliance Status: Compliant\n").unwrap(),
            loop_outcome_ref: "r".into(),
            loop_status: LoopStatus::Converged,
            needs_arbitration: false,
            reflection_history: Vec::new(),
            state: ActionState::Pending,
            created_at: at,
            decided_at: None,
            applied_at: None,
            decided_by: None,
            history: vec![StateChange { from: None, to: ActionState::Pending, at }],
            failure: None,
        }
    }

    #[test]
    fn action_view_carries_hunks() {
        let original = "a = 1;\nsecurity = {\n  x = \"no\";\n};\n";
        let proposed = "a = 1;\nsecurity = {\n  x = \"yes\";\n};\n";
        let view = ActionView::new(action(original, Some(proposed)));
        assert_eq!(view.touched_group_paths, ["security"]);
        assert_eq!(view.hunks.len(), 1);
        assert!(view.hunks[0].original_text.contains("\"no\"") && view.hunks[0].edited_text.contains("\"yes\""));
        assert_eq!(&original[view.hunks[0].original_start..view.hunks[0].original_end], view.hunks[0].original_text);

        let none = ActionView::new(action(original, None));
        assert!(none.hunks.is_empty() && none.touched_group_paths.is_empty());
    }

    #[test]
    fn write_atomic_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/run.json");
        write_atomic(&path, "one").unwrap();
        write_atomic(&path, "two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert!(!path.with_extension("tmp").exists());
    }

    #[test]
    fn submit_without_chat_backend_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let config = ServiceConfig {
            data_dir: dir.path().join("state"),
            components: BTreeMap::from([("cu".to_string(), dir.path().join("cu.conf"))]),
            ..ServiceConfig::default()
        };
        let engine = Engine::open(config, None).unwrap();
        assert!(matches!(engine.submit("cu", "a = 1;", None, TriggerKind::CodeSubmission, None), Err(EngineError::NoChatBackend)));
        assert_eq!(engine.components()[0].last_status, LastStatus::Unknown);
        assert_eq!(engine.components()[0].last_checked_at, None);
    }
}
