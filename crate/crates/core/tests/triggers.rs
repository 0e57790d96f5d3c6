use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::Utc;
use ransec_core::agents::{
    dispatch_trigger, AgentError, AgentOptions, Agents, DispatchContext, PolicyChange, RetrievalMode, Trigger, TriggerKind,
};
use ransec_core::events::{correlate, ingest_events, raise_triggers, CorrelationRule};
use ransec_core::knowledge_base::{extract, IngestOptions, KnowledgeStore};
use ransec_core::llm_provider::{MockEmbedder, ScriptedProvider};
use ransec_core::policy_hub::{ChangeKind, Fetcher, HubState, PolicyHub, PolicySource};

struct NoFetch;

impl Fetcher for NoFetch {
    fn fetch(&self, url: &str) -> Result<String, String> {
        Err(format!("unexpected fetch of {url}"))
    }
}

const OK: &str = "Compliance Status: Compliant\n";
const CLEAN: &str = r#"{"OverallAssessment": "ok", "Issues": [], "MustFixSummary": []}"#;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn agents() -> (Agents, Arc<ScriptedProvider>) {
    let assessor = Arc::new(ScriptedProvider::from_fn("assessor", |_| Ok(OK.to_string())));
    let reflector = Arc::new(ScriptedProvider::from_fn("reflector", |_| Ok(CLEAN.to_string())));
    let agents = Agents { assessor: assessor.clone(), reflector, query_generator: assessor.clone(), embedder: Arc::new(MockEmbedder::default()) };
    (agents, assessor)
}

fn components() -> BTreeMap<String, String> {
    let cfg = |n: &str| std::fs::read_to_string(fixtures().join("configs").join(n)).unwrap();
    BTreeMap::from([("cu-1".to_string(), cfg("cu_gnb.conf")), ("du-1".to_string(), cfg("du_gnb.conf"))])
}

#[test]
fn event_file_to_runtime_triggers() {
    let batch = ingest_events(&fixtures().join("events/auth_failures.jsonl")).unwrap();
    assert_eq!(batch.events.len(), 7);
    assert_eq!(batch.rejects.iter().map(|r| r.line).collect::<Vec<_>>(), vec![7, 9]);
    assert!(batch.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));

    let rules: Vec<CorrelationRule> = serde_json::from_str(&std::fs::read_to_string(fixtures().join("events/rules.json")).unwrap()).unwrap();
    let patterns = correlate(&batch.events, &rules);
    assert_eq!(patterns.len(), 2);
    assert_eq!(patterns[0].rule_id, "auth-burst");
    assert_eq!(patterns[0].matched.len(), 3);
    assert_eq!(patterns[0].component_ids.iter().collect::<Vec<_>>(), ["cu-1", "du-1"]);
    assert_eq!(patterns[1].rule_id, "authz-deny");

    let triggers = raise_triggers(&patterns, Utc::now());
    assert!(triggers.iter().all(|t| t.kind() == TriggerKind::RuntimeEvent));

    let (agents, assessor) = agents();
    let embedder = MockEmbedder::default();
    let mut store = KnowledgeStore::for_provider(&embedder);
    let comps = components();
    let verified = BTreeMap::new();
    let ingest = IngestOptions::default();
    let options = AgentOptions::default();
    let mut ctx = DispatchContext {
        agents: &agents,
        options: &options,
        mode: RetrievalMode::NoRag,
        store: &mut store,
        ingest: &ingest,
        components: &comps,
        last_verified: &verified,
    };
    let runs = dispatch_trigger(&mut ctx, &triggers[0]).unwrap();
    assert_eq!(runs.iter().map(|r| r.component_id.as_str()).collect::<Vec<_>>(), ["cu-1", "du-1"]);
    assert!(runs.iter().all(|r| r.outcome.as_ref().is_ok_and(|o| o.converged())));
    for prompt in assessor.received() {
        let text: String = prompt.iter().map(|m| m.content.as_str()).collect();
        assert!(text.contains("auth-burst") && text.contains("matched 3 events"));
    }
}

#[test]
fn runtime_trigger_for_unknown_component_is_rejected() {
    let batch = ingest_events(&fixtures().join("events/auth_failures.jsonl")).unwrap();
    let rules: Vec<CorrelationRule> = serde_json::from_str(&std::fs::read_to_string(fixtures().join("events/rules.json")).unwrap()).unwrap();
    let triggers = raise_triggers(&correlate(&batch.events, &rules), Utc::now());
    let (agents, assessor) = agents();
    let embedder = MockEmbedder::default();
    let mut store = KnowledgeStore::for_provider(&embedder);
    let comps = BTreeMap::from([("cu-1".to_string(), "a = 1;\n".to_string())]);
    let verified = BTreeMap::new();
    let ingest = IngestOptions::default();
    let options = AgentOptions::default();
    let mut ctx = DispatchContext {
        agents: &agents,
        options: &options,
        mode: RetrievalMode::NoRag,
        store: &mut store,
        ingest: &ingest,
        components: &comps,
        last_verified: &verified,
    };
    let err = dispatch_trigger(&mut ctx, &triggers[0]).unwrap_err();
    assert!(matches!(err, AgentError::TriggerRejected(_)), "{err}");
    assert_eq!(assessor.calls(), 0);
}

#[test]
fn hub_changes_reingest_and_reassess() {
    let docs = tempfile::tempdir().unwrap();
    std::fs::write(docs.path().join("policy_a.md"), "Ciphering must never negotiate NEA0 on the F1 interface.\n").unwrap();
    std::fs::write(docs.path().join("policy_b.txt"), "Integrity protection of signalling is mandatory.\n").unwrap();
    std::fs::write(docs.path().join("ignored.pdf"), "binary").unwrap();
    let state_path = docs.path().join("hub_state.json");

    let (agents, assessor) = agents();
    let embedder = MockEmbedder::default();
    let mut store = KnowledgeStore::for_provider(&embedder);
    let comps = components();
    let verified = BTreeMap::new();
    let ingest = IngestOptions::default();
    let options = AgentOptions::default();

    let poll = |store: &mut KnowledgeStore| {
        let state = HubState::load(&state_path).unwrap();
        let fetcher: Arc<dyn Fetcher> = Arc::new(NoFetch);
        let mut hub = PolicyHub::new(vec![PolicySource::directory("local", docs.path())], state, fetcher).unwrap();
        let mut changes = Vec::new();
        let report = hub.poll_once(|event, content| {
            let document = content.map(|c| extract(c, &event.filename).map_err(|e| e.to_string())).transpose()?;
            changes.push(PolicyChange { event: event.clone(), document });
            Ok(())
        });
        hub.state().save(&state_path).unwrap();
        assert!(report.source_errors.is_empty() && report.failed.is_empty());
        if changes.is_empty() {
            return Vec::new();
        }
        let mut ctx = DispatchContext {
            agents: &agents,
            options: &options,
            mode: RetrievalMode::PlainRag,
            store,
            ingest: &ingest,
            components: &comps,
            last_verified: &verified,
        };
        let trigger = Trigger::PolicyUpdate { changes: changes.clone(), received_at: Utc::now() };
        let runs = dispatch_trigger(&mut ctx, &trigger).unwrap();
        assert_eq!(runs.len(), comps.len());
        changes.into_iter().map(|c| (c.event.filename, c.event.change)).collect::<Vec<_>>()
    };

    assert_eq!(poll(&mut store), [("policy_a.md".to_string(), ChangeKind::New), ("policy_b.txt".to_string(), ChangeKind::New)]);
    assert_eq!(store.filenames(), ["policy_a.md", "policy_b.txt"]);
    let calls = assessor.calls();
    assert_eq!(calls, comps.len());

    // restart with persisted state: nothing new
    assert!(poll(&mut store).is_empty());
    assert_eq!(assessor.calls(), calls);

    std::fs::write(docs.path().join("policy_a.md"), "Ciphering must never negotiate NEA0 on F1 or E1.\n").unwrap();
    std::fs::remove_file(docs.path().join("policy_b.txt")).unwrap();
    assert_eq!(poll(&mut store), [("policy_a.md".to_string(), ChangeKind::Updated), ("policy_b.txt".to_string(), ChangeKind::Removed)]);
    assert_eq!(store.live_len(), 1);
    let hit = store.search("negotiate NEA0", 1, &embedder, Default::default()).unwrap();
    assert!(hit[0].chunk.text.contains("E1"));
}
