use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{run_benchmark, BenchConfig, BenchmarkOptions, BenchmarkReport, EvalError, GroundTruth, ModelUnderTest, ScoringMode};
use crate::agents::{AgentOptions, Agents, ComplianceStatus, RetrievalMode};
use crate::digest::sha256_hex;
use crate::knowledge_base::{IngestOptions, KnowledgeStore};
use crate::llm_provider::{EmbeddingProvider, MockEmbedder, ReplayProvider};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestConfig {
    pub config_id: String,
    pub path: PathBuf,
    pub expected_status: ComplianceStatus,
    #[serde(default)]
    pub expected_violation_paths: BTreeSet<String>,
    #[serde(default)]
    pub reference_report: Option<PathBuf>,
}

/// One table column: a replay transcript per retrieval mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestModel {
    pub name: String,
    pub transcripts: BTreeMap<RetrievalMode, PathBuf>,
}

/// Replayable benchmark suite. Relative paths resolve against the manifest's
/// directory. Expected values are keyed by model name, then mode label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    #[serde(default = "default_runs")]
    pub runs_per_config: usize,
    #[serde(default)]
    pub scoring: ScoringMode,
    pub corpus_dir: Option<PathBuf>,
    pub modes: Vec<RetrievalMode>,
    pub configs: Vec<ManifestConfig>,
    pub models: Vec<ManifestModel>,
    #[serde(default)]
    pub expected_accuracy: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(default)]
    pub expected_latency: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_runs() -> usize {
    3
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))
}

impl BenchmarkManifest {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let mut m: Self = serde_json::from_str(&read(path)?).map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn suite(&self) -> Result<(Vec<BenchConfig>, BTreeMap<String, GroundTruth>), EvalError> {
        let mut configs = Vec::new();
        let mut truths = BTreeMap::new();
        for c in &self.configs {
            configs.push(BenchConfig { config_id: c.config_id.clone(), config_text: read(&self.resolve(&c.path))? });
            let reference_report_text = c.reference_report.as_ref().map(|p| read(&self.resolve(p))).transpose()?;
            truths.insert(
                c.config_id.clone(),
                GroundTruth {
                    config_id: c.config_id.clone(),
                    expected_status: c.expected_status,
                    expected_violation_paths: c.expected_violation_paths.clone(),
                    reference_report_text,
                },
            );
        }
        Ok((configs, truths))
    }

    pub fn build_store(&self, embedder: &dyn EmbeddingProvider) -> Result<Option<KnowledgeStore>, EvalError> {
        let Some(dir) = &self.corpus_dir else { return Ok(None) };
        let mut store = KnowledgeStore::for_provider(embedder);
        store
            .ingest_dir(&self.resolve(dir), embedder, &IngestOptions::default())
            .map_err(|e| EvalError::Manifest(format!("corpus: {e}")))?;
        Ok(Some(store))
    }

    /// Replays every (model, mode) cell with its transcript and mock embeddings.
    pub fn run(&self) -> Result<BenchmarkReport, EvalError> {
        let (configs, truths) = self.suite()?;
        let embedder: Arc<dyn EmbeddingProvider> = Arc::new(MockEmbedder::default());
        let store = self.build_store(embedder.as_ref())?;
        let options = BenchmarkOptions {
            runs_per_config: self.runs_per_config,
            scoring: self.scoring,
            agent_options: AgentOptions { include_local_latency: false, ..AgentOptions::default() },
            corpus_hash: store.as_ref().map(|s| sha256_hex(s.to_jsonl())),
            ..BenchmarkOptions::default()
        };
        let mut merged: Option<BenchmarkReport> = None;
        for m in &self.models {
            for &mode in &self.modes {
                let path = m
                    .transcripts
                    .get(&mode)
                    .ok_or_else(|| EvalError::Manifest(format!("model {} has no transcript for {mode}", m.name)))?;
                let replay = ReplayProvider::load(m.name.clone(), &self.resolve(path)).map_err(|e| EvalError::Manifest(e.to_string()))?;
                let model = ModelUnderTest { name: m.name.clone(), agents: Agents::single(Arc::new(replay), embedder.clone()) };
                let cell = run_benchmark(&configs, &truths, &[mode], &[model], store.as_ref(), &options)?;
                match &mut merged {
                    None => merged = Some(cell),
                    Some(r) => {
                        r.cells.extend(cell.cells);
                        r.trials.extend(cell.trials);
                    }
                }
            }
        }
        let mut report = merged.ok_or(EvalError::EmptySuite)?;
        report.metadata.models = self.models.iter().map(|m| m.name.clone()).collect();
        Ok(report)
    }

    /// Compares rendered cells against the expected values.
    pub fn check(&self, report: &BenchmarkReport) -> Result<(), EvalError> {
        for (model, by_mode) in &self.expected_accuracy {
            for (label, expected) in by_mode {
                let mode: RetrievalMode = label.parse().map_err(EvalError::Manifest)?;
                let found = report.accuracy_text(model, mode).unwrap_or_else(|| "missing".into());
                if &found != expected {
                    return Err(EvalError::FixtureMismatch { model: model.clone(), mode: label.clone(), expected: expected.clone(), found });
                }
            }
        }
        for (model, by_mode) in &self.expected_latency {
            for (label, expected) in by_mode {
                let mode: RetrievalMode = label.parse().map_err(EvalError::Manifest)?;
                let found = report
                    .cell(model, mode)
                    .and_then(|c| c.mean_latency_seconds)
                    .map(|s| format!("{s:.2}"))
                    .unwrap_or_else(|| "missing".into());
                if &found != expected {
                    return Err(EvalError::FixtureMismatch {
                        model: model.clone(),
                        mode: format!("{label} latency"),
                        expected: expected.clone(),
                        found,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Loads a manifest, replays it, and checks the rendered cells.
pub fn replay_table_check(manifest_path: &Path) -> Result<BenchmarkReport, EvalError> {
    let manifest = BenchmarkManifest::load(manifest_path)?;
    let report = manifest.run()?;
    manifest.check(&report)?;
    Ok(report)
}
