use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ransec_core::agents::{AgentOptions, RetrievalMode};
use ransec_core::enforcement::EnforcementPolicy;
use ransec_core::events::CorrelationRule;
use ransec_core::llm_provider::{MockEmbedder, ProviderConfig};
use ransec_core::policy_hub::{PolicySource, SourceLocation};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid configuration {path}: {message}")]
    Invalid { path: String, message: String },
}

/// Chat backend for assessments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChatSettings {
    /// No backend; commands that need one fail unless given `--replay`.
    #[default]
    None,
    /// Serve recorded exchanges. The model name defaults to the one in the transcript.
    Replay { transcript: PathBuf, model: Option<String> },
    Http(ProviderConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSettings {
    Mock {
        #[serde(default = "default_dimension")]
        dimension: usize,
        #[serde(default)]
        seed: u64,
    },
    Http {
        #[serde(flatten)]
        provider: ProviderConfig,
        dimension: usize,
    },
}

fn default_dimension() -> usize {
    MockEmbedder::DEFAULT_DIMENSION
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        EmbedderSettings::Mock { dimension: default_dimension(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSettings {
    pub bind: String,
    /// Environment variable holding the operator token required on mutating requests.
    pub operator_token_env: Option<String>,
}

impl Default for ServerSettings {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8080".into(), operator_token_env: None }
    }
}

/// The whole deployment in one TOML file. Relative paths resolve against the
/// file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Holds the knowledge store, audit log, run records and hub state.
    pub data_dir: PathBuf,
    /// Ingested on first start when the knowledge store does not exist yet.
    pub corpus_dir: Option<PathBuf>,
    pub default_mode: RetrievalMode,
    pub agent: AgentOptions,
    pub enforcement: EnforcementPolicy,
    pub chat: ChatSettings,
    pub embedder: EmbedderSettings,
    pub server: ServerSettings,
    /// Component id to the configuration file enforcement writes.
    pub components: BTreeMap<String, PathBuf>,
    pub correlation_rules: Vec<CorrelationRule>,
    pub policy_sources: Vec<PolicySource>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from(".ransec"),
            corpus_dir: None,
            default_mode: RetrievalMode::AgenticRag,
            agent: AgentOptions::default(),
            enforcement: EnforcementPolicy::default(),
            chat: ChatSettings::None,
            embedder: EmbedderSettings::default(),
            server: ServerSettings::default(),
            components: BTreeMap::new(),
            correlation_rules: Vec::new(),
            policy_sources: Vec::new(),
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        let invalid = |message: String| ConfigError::Invalid { path: path.display().to_string(), message };
        let mut config: Self = toml::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        config.resolve(path.parent().unwrap_or(Path::new(".")));
        config.validate().map_err(invalid)?;
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        if let Some(c) = &mut self.corpus_dir {
            fix(c);
        }
        if let ChatSettings::Replay { transcript, .. } = &mut self.chat {
            fix(transcript);
        }
        for p in self.components.values_mut() {
            fix(p);
        }
        for s in &mut self.policy_sources {
            if let SourceLocation::Directory { path } = &mut s.location {
                fix(path);
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.enforcement.validate().map_err(|e| e.to_string())?;
        for r in &self.correlation_rules {
            r.validate().map_err(|e| e.to_string())?;
        }
        for s in &self.policy_sources {
            s.validate().map_err(|e| e.to_string())?;
        }
        if self.agent.max_iterations == 0 {
            return Err("agent.max_iterations must be at least 1".into());
        }
        Ok(())
    }

    pub fn knowledge_path(&self) -> PathBuf {
        self.data_dir.join("knowledge.jsonl")
    }

    pub fn audit_path(&self) -> PathBuf {
        self.data_dir.join("audit.jsonl")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.data_dir.join("runs")
    }

    pub fn hub_state_path(&self) -> PathBuf {
        self.data_dir.join("hub_state.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file_and_resolves_paths() {
        let text = r#"
data_dir = "state"
corpus_dir = "corpus"
default_mode = "plain_rag"

[agent]
max_iterations = 2

[enforcement]
feedback_enabled = false

[chat]
kind = "replay"
transcript = "t.jsonl"

[embedder]
kind = "mock"
dimension = 64

[components]
cu = "targets/cu.conf"

[[correlation_rules]]
rule_id = "burst"
category = "authentication"
threshold = 3
window = 60

[[policy_sources]]
source_id = "local"
kind = "directory"
path = "specs"
poll_interval = 3600
"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ransec.toml");
        std::fs::write(&path, text).unwrap();
        let c = ServiceConfig::load(&path).unwrap();
        assert_eq!(c.data_dir, dir.path().join("state"));
        assert_eq!(c.default_mode, RetrievalMode::PlainRag);
        assert_eq!(c.agent.max_iterations, 2);
        assert_eq!(c.agent.k, AgentOptions::default().k);
        assert!(!c.enforcement.feedback_enabled && c.enforcement.require_human_approval);
        assert_eq!(c.chat, ChatSettings::Replay { transcript: dir.path().join("t.jsonl"), model: None });
        assert_eq!(c.embedder, EmbedderSettings::Mock { dimension: 64, seed: 0 });
        assert_eq!(c.components["cu"], dir.path().join("targets/cu.conf"));
        assert_eq!(c.correlation_rules[0].threshold, 3);
        assert_eq!(c.policy_sources[0].location, SourceLocation::Directory { path: dir.path().join("specs") });
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "unknown_key = 1\n").unwrap();
        assert!(matches!(ServiceConfig::load(&path), Err(ConfigError::Invalid { .. })));
        std::fs::write(&path, "[enforcement]\nauto_apply = true\n").unwrap();
        assert!(matches!(ServiceConfig::load(&path), Err(ConfigError::Invalid { .. })));
        assert!(matches!(ServiceConfig::load(&dir.path().join("missing.toml")), Err(ConfigError::Read { .. })));
    }
}
