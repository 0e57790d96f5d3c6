use std::path::{Path, PathBuf};
use std::sync::Arc;

use ransec::config::ServiceConfig;
use ransec::engine::{Engine, LastStatus, RunState};
use ransec_core::agents::{TriggerKind, ASSESSMENT_PROMPT, QUERY_GENERATOR_PROMPT};
use ransec_core::enforcement::AuditKind;
use ransec_core::llm_provider::ScriptedProvider;
use ransec_core::policy_hub::ChangeKind;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn compliant_chat() -> Arc<ScriptedProvider> {
    Arc::new(ScriptedProvider::from_fn("scripted", |msgs| {
        Ok(if msgs[0].content == QUERY_GENERATOR_PROMPT {
            "Integrity protection must be enabled for DRBs.\n".to_string()
        } else if msgs[0].content == ASSESSMENT_PROMPT {
            "Compliance Status: Compliant\n".to_string()
        } else {
            r#"{"OverallAssessment": "ok", "Issues": [], "MustFixSummary": []}"#.to_string()
        })
    }))
}

fn deployment(dir: &Path) -> ServiceConfig {
    std::fs::create_dir_all(dir.join("targets")).unwrap();
    std::fs::create_dir_all(dir.join("specs")).unwrap();
    std::fs::copy(fixtures().join("configs/cu_gnb.conf"), dir.join("targets/cu.conf")).unwrap();
    std::fs::copy(fixtures().join("configs/du_gnb.conf"), dir.join("targets/du.conf")).unwrap();
    let toml = format!(
        r#"
data_dir = "state"
corpus_dir = "{corpus}"

[components]
cu-1 = "targets/cu.conf"
du-1 = "targets/du.conf"

[[policy_sources]]
source_id = "local"
kind = "directory"
path = "specs"
poll_interval = 3600
"#,
        corpus = fixtures().join("corpus").display(),
    );
    let path = dir.join("ransec.toml");
    std::fs::write(&path, toml).unwrap();
    let mut config = ServiceConfig::load(&path).unwrap();
    config.correlation_rules = serde_json::from_str(&std::fs::read_to_string(fixtures().join("events/rules.json")).unwrap()).unwrap();
    config
}

#[test]
fn event_patterns_reassess_their_components() {
    let dir = tempfile::tempdir().unwrap();
    let chat = compliant_chat();
    let engine = Engine::open(deployment(dir.path()), Some(chat.clone())).unwrap();

    let (rejected, patterns, runs) = engine.events_ingest(&fixtures().join("events/auth_failures.jsonl"), false).unwrap();
    assert_eq!((rejected, patterns.len(), runs.len()), (2, 2, 0));
    assert_eq!(chat.calls(), 0);

    let (_, _, runs) = engine.events_ingest(&fixtures().join("events/auth_failures.jsonl"), true).unwrap();
    let ran: Vec<(&str, RunState)> = runs.iter().map(|r| (r.component_id.as_str(), r.state)).collect();
    assert_eq!(ran, [("cu-1", RunState::Completed), ("du-1", RunState::Completed), ("cu-1", RunState::Completed)]);
    assert!(runs.iter().all(|r| r.trigger == TriggerKind::RuntimeEvent && r.event_context.as_deref().unwrap().contains("Correlation rule")));
    let prompts = chat.received();
    assert!(prompts.iter().any(|m| m.iter().any(|x| x.content.contains("auth-burst"))));

    let status = engine.components();
    assert!(status.iter().all(|c| c.last_status == LastStatus::Compliant && c.dynamic_check_passed && !c.static_check_passed));
    assert!(engine.pending().is_empty());
}

#[test]
fn policy_changes_are_ingested_then_components_reassessed() {
    let dir = tempfile::tempdir().unwrap();
    let chat = compliant_chat();
    let config = deployment(dir.path());
    let engine = Engine::open(config, Some(chat.clone())).unwrap();
    let before = engine.knowledge_len();

    let (changes, runs) = engine.hub_poll(true).unwrap();
    assert!(changes.is_empty() && runs.is_empty());

    let spec = dir.path().join("specs/new_requirement.md");
    std::fs::write(&spec, "# Integrity\n\nUser plane integrity protection shall be activated for every data radio bearer.\n").unwrap();
    let (changes, runs) = engine.hub_poll(true).unwrap();
    assert_eq!(changes.len(), 1);
    assert_eq!((changes[0].change, changes[0].filename.as_str()), (ChangeKind::New, "new_requirement.md"));
    assert!(engine.knowledge_len() > before);
    assert_eq!(runs.len(), 2);
    assert!(runs.iter().all(|r| r.trigger == TriggerKind::PolicyUpdate && r.state == RunState::Completed));
    assert!(engine.components().iter().all(|c| c.static_check_passed));

    // the baseline is persisted, so an unchanged source yields nothing after a restart
    drop(engine);
    let engine = Engine::open(deployment(dir.path()), Some(chat.clone())).unwrap();
    let (changes, runs) = engine.hub_poll(true).unwrap();
    assert!(changes.is_empty() && runs.is_empty());

    std::fs::remove_file(&spec).unwrap();
    let (changes, _) = engine.hub_poll(false).unwrap();
    assert_eq!(changes[0].change, ChangeKind::Removed);
    assert_eq!(engine.knowledge_len(), before);
    let kinds: Vec<_> = engine.history("cu-1").unwrap().iter().map(|r| r.kind).collect();
    assert_eq!(kinds, [AuditKind::AssessmentCompleted]);
}
