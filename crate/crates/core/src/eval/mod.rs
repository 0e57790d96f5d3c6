//! Benchmark harness: configurations x retrieval modes x models x runs, with
//! accuracy, similarity and response-time summaries.

mod manifest;
mod similarity;

pub use manifest::{replay_table_check, BenchmarkManifest, ManifestConfig, ManifestModel};
pub use similarity::{token_f1, EmbeddingCosineScorer, SimilarityScorer, TokenF1Scorer};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    assess_compliance, run_compliance_loop, AgentOptions, Agents, ComplianceReport, ComplianceStatus, RetrievalMode,
};
use crate::knowledge_base::KnowledgeStore;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("benchmark suite has no configurations")]
    EmptySuite,
    #[error("no ground truth for configuration {0}")]
    MissingTruth(String),
    #[error("invalid ground truth for {config_id}: {message}")]
    InvalidTruth { config_id: String, message: String },
    #[error("similarity needs two non-empty texts")]
    EmptyText,
    #[error("similarity scorer failed: {0}")]
    Scorer(String),
    #[error("cell {model} / {mode}: expected accuracy {expected}, rendered {found}")]
    FixtureMismatch { model: String, mode: String, expected: String, found: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config_id: String,
    pub expected_status: ComplianceStatus,
    #[serde(default)]
    pub expected_violation_paths: BTreeSet<String>,
    #[serde(default)]
    pub reference_report_text: Option<String>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.expected_status == ComplianceStatus::NonCompliant && self.expected_violation_paths.is_empty() {
            return Err(EvalError::InvalidTruth {
                config_id: self.config_id.clone(),
                message: "non-compliant truth needs expected violation paths".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// Status matches and, when non-compliant, every expected path is reported.
    #[default]
    Strict,
    StatusOnly,
}

pub fn score_correct(report: &ComplianceReport, truth: &GroundTruth, mode: ScoringMode) -> bool {
    if report.status != truth.expected_status {
        return false;
    }
    if mode == ScoringMode::StatusOnly || truth.expected_status == ComplianceStatus::Compliant {
        return true;
    }
    let reported: BTreeSet<&str> = report.violation_paths().into_iter().collect();
    truth.expected_violation_paths.iter().all(|p| reported.contains(p.as_str()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub config_id: String,
    pub config_text: String,
}

/// A named set of agents evaluated as one table column.
#[derive(Clone)]
pub struct ModelUnderTest {
    pub name: String,
    pub agents: Agents,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_id: String,
    pub mode: RetrievalMode,
    pub model_name: String,
    pub run_index: usize,
    pub predicted_status: Option<ComplianceStatus>,
    pub correct: bool,
    pub similarity: Option<f64>,
    pub latency_seconds: f64,
    /// Set for errored trials, which are excluded from the cell metrics.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model_name: String,
    pub mode: RetrievalMode,
    /// Trials that completed.
    pub trials: usize,
    pub errored: usize,
    pub correct: usize,
    pub mean_similarity: Option<f64>,
    pub mean_latency_seconds: Option<f64>,
    /// More than the allowed share of trials errored.
    pub invalid: bool,
}

impl CellSummary {
    pub fn accuracy(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.correct as f64 / self.trials as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkMetadata {
    pub corpus_hash: Option<String>,
    pub models: Vec<String>,
    pub embedder_id: Option<String>,
    pub scorer: String,
    pub scoring: ScoringMode,
    pub runs_per_config: usize,
    pub loop_mode: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialRecord>,
    pub metadata: BenchmarkMetadata,
}

pub struct BenchmarkOptions<'a> {
    pub runs_per_config: usize,
    pub scoring: ScoringMode,
    pub agent_options: AgentOptions,
    /// Score full assess/reflect loops instead of single assessments.
    pub loop_mode: bool,
    /// A cell with a larger errored share is flagged invalid.
    pub max_error_fraction: f64,
    pub scorer: &'a dyn SimilarityScorer,
    pub corpus_hash: Option<String>,
}

impl Default for BenchmarkOptions<'_> {
    fn default() -> Self {
        Self {
            runs_per_config: 3,
            scoring: ScoringMode::Strict,
            agent_options: AgentOptions::default(),
            loop_mode: false,
            max_error_fraction: 0.25,
            scorer: &TokenF1Scorer,
            corpus_hash: None,
        }
    }
}

/// Runs every (model, mode, config, run) trial in that nesting order.
pub fn run_benchmark(
    configs: &[BenchConfig],
    truths: &BTreeMap<String, GroundTruth>,
    modes: &[RetrievalMode],
    models: &[ModelUnderTest],
    store: Option<&KnowledgeStore>,
    options: &BenchmarkOptions<'_>,
) -> Result<BenchmarkReport, EvalError> {
    if configs.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    for c in configs {
        truths.get(&c.config_id).ok_or_else(|| EvalError::MissingTruth(c.config_id.clone()))?.validate()?;
    }
    let mut trials = Vec::new();
    let mut cells = Vec::new();
    for model in models {
        for &mode in modes {
            let first = trials.len();
            for config in configs {
                let truth = &truths[&config.config_id];
                for run_index in 0..options.runs_per_config {
                    trials.push(run_trial(model, mode, config, truth, run_index, store, options)?);
                }
            }
            cells.push(summarize(&model.name, mode, &trials[first..], options.max_error_fraction));
        }
    }
    Ok(BenchmarkReport {
        cells,
        trials,
        metadata: BenchmarkMetadata {
            corpus_hash: options.corpus_hash.clone(),
            models: models.iter().map(|m| m.name.clone()).collect(),
            embedder_id: store.map(|s| s.embedder_id().to_string()),
            scorer: options.scorer.name(),
            scoring: options.scoring,
            runs_per_config: options.runs_per_config,
            loop_mode: options.loop_mode,
        },
    })
}

fn run_trial(
    model: &ModelUnderTest,
    mode: RetrievalMode,
    config: &BenchConfig,
    truth: &GroundTruth,
    run_index: usize,
    store: Option<&KnowledgeStore>,
    options: &BenchmarkOptions<'_>,
) -> Result<TrialRecord, EvalError> {
    let store = if mode == RetrievalMode::NoRag { None } else { store };
    let result = if options.loop_mode {
        run_compliance_loop(&model.agents, &options.agent_options, mode, &config.config_text, store, None, None)
            .map(|o| (o.final_report, o.total_latency))
            .map_err(|e| e.to_string())
    } else {
        assess_compliance(&model.agents, &options.agent_options, mode, &config.config_text, store, None, None)
            .map(|r| (r.report, r.latency))
            .map_err(|e| e.to_string())
    };
    let mut trial = TrialRecord {
        config_id: config.config_id.clone(),
        mode,
        model_name: model.name.clone(),
        run_index,
        predicted_status: None,
        correct: false,
        similarity: None,
        latency_seconds: 0.0,
        error: None,
    };
    match result {
        Ok((report, latency)) => {
            trial.predicted_status = Some(report.status);
            trial.correct = score_correct(&report, truth, options.scoring);
            trial.latency_seconds = latency.as_secs_f64();
            if let Some(reference) = &truth.reference_report_text {
                trial.similarity = Some(options.scorer.score(&report.raw_text, reference)?);
            }
        }
        Err(e) => {
            tracing::warn!(model = %model.name, %mode, config = %config.config_id, run_index, error = %e, "trial errored");
            trial.error = Some(e);
        }
    }
    Ok(trial)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn summarize(model: &str, mode: RetrievalMode, trials: &[TrialRecord], max_error_fraction: f64) -> CellSummary {
    let ok: Vec<&TrialRecord> = trials.iter().filter(|t| t.error.is_none()).collect();
    let errored = trials.len() - ok.len();
    let sims: Vec<f64> = ok.iter().filter_map(|t| t.similarity).collect();
    let lats: Vec<f64> = ok.iter().map(|t| t.latency_seconds).collect();
    CellSummary {
        model_name: model.to_string(),
        mode,
        trials: ok.len(),
        errored,
        correct: ok.iter().filter(|t| t.correct).count(),
        mean_similarity: mean(&sims),
        mean_latency_seconds: mean(&lats),
        invalid: ok.is_empty() || errored as f64 > max_error_fraction * trials.len() as f64,
    }
}

/// `num / den` rounded half-up to `decimals` places, using integers only.
pub fn format_ratio(num: usize, den: usize, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let (num, den) = (num as u128, den as u128);
    let q = (2 * num * scale + den) / (2 * den);
    if decimals == 0 {
        return q.to_string();
    }
    format!("{}.{:0width$}", q / scale, q % scale, width = decimals as usize)
}

impl BenchmarkReport {
    pub fn cell(&self, model: &str, mode: RetrievalMode) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.model_name == model && c.mode == mode)
    }

    pub fn modes(&self) -> Vec<RetrievalMode> {
        let mut seen = Vec::new();
        for c in &self.cells {
            if !seen.contains(&c.mode) {
                seen.push(c.mode);
            }
        }
        seen
    }

    /// Rendered accuracy of one cell, or None when it is missing or invalid.
    pub fn accuracy_text(&self, model: &str, mode: RetrievalMode) -> Option<String> {
        self.cell(model, mode).filter(|c| !c.invalid).map(|c| format_ratio(c.correct, c.trials, 2))
    }

    /// Recomputes each cell from the trial table.
    pub fn cells_match_trials(&self) -> bool {
        self.cells.iter().all(|c| {
            let ts: Vec<&TrialRecord> =
                self.trials.iter().filter(|t| t.model_name == c.model_name && t.mode == c.mode && t.error.is_none()).collect();
            ts.len() == c.trials && ts.iter().filter(|t| t.correct).count() == c.correct
        })
    }
}

const INVALID_CELL: &str = "n/a";

/// Markdown table: one row per (metric, method), one column per model.
pub fn render_table(report: &BenchmarkReport) -> String {
    let models = &report.metadata.models;
    let modes = report.modes();
    let mut out = String::new();
    let _ = writeln!(out, "| Metric | Method | {} |", models.join(" | "));
    let _ = writeln!(out, "|---|---|{}", "---|".repeat(models.len()));
    let mut any_invalid = false;
    let metrics: [(String, fn(&CellSummary) -> Option<String>); 3] = [
        ("Accuracy".to_string(), |c| Some(format_ratio(c.correct, c.trials, 2))),
        (format!("Similarity ({})", report.metadata.scorer), |c| c.mean_similarity.map(|s| format!("{s:.3}"))),
        ("Response Time (s)".to_string(), |c| c.mean_latency_seconds.map(|s| format!("{s:.2}"))),
    ];
    for (metric, value) in &metrics {
        for &mode in &modes {
            let cells: Vec<String> = models
                .iter()
                .map(|m| match report.cell(m, mode) {
                    Some(c) if c.invalid => {
                        any_invalid = true;
                        format!("{INVALID_CELL}*")
                    }
                    Some(c) => value(c).unwrap_or_else(|| INVALID_CELL.to_string()),
                    None => INVALID_CELL.to_string(),
                })
                .collect();
            let _ = writeln!(out, "| {metric} | {} | {} |", mode.label(), cells.join(" | "));
        }
    }
    if any_invalid {
        out.push_str("\n* More than 25% of trials in this cell errored; the cell is not reported.\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::agents::parse_report;
    use crate::llm_provider::{MockEmbedder, ProviderError, ScriptedProvider};

    const NONCOMPLIANT: &str = "Compliance Status: Non-Compliant\nViolations Found\n1. nea0 (`security.ciphering_algorithms`)\n2. nia0 (`security.integrity_algorithms`)\n```corrected\nsecurity = { ciphering_algorithms = (\"nea2\"); };\n```\n";

    fn truth(paths: &[&str]) -> GroundTruth {
        GroundTruth {
            config_id: "cu".into(),
            expected_status: ComplianceStatus::NonCompliant,
            expected_violation_paths: paths.iter().map(|s| s.to_string()).collect(),
            reference_report_text: None,
        }
    }

    #[test]
    fn scoring_modes() {
        let r = parse_report(NONCOMPLIANT).unwrap();
        let both = truth(&["security.ciphering_algorithms", "security.integrity_algorithms"]);
        assert!(score_correct(&r, &both, ScoringMode::Strict));
        let more = truth(&["security.ciphering_algorithms", "security.drb_integrity"]);
        assert!(!score_correct(&r, &more, ScoringMode::Strict));
        assert!(score_correct(&r, &more, ScoringMode::StatusOnly));
        let compliant = GroundTruth { expected_status: ComplianceStatus::Compliant, ..truth(&[]) };
        assert!(!score_correct(&r, &compliant, ScoringMode::StatusOnly));
        assert!(truth(&[]).validate().is_err());
    }

    #[test]
    fn ratio_rounding_is_half_up() {
        let cases = [(7, 12, "0.58"), (8, 12, "0.67"), (6, 12, "0.50"), (3, 12, "0.25"), (2, 12, "0.17"), (4, 12, "0.33"), (9, 12, "0.75"), (10, 12, "0.83"), (1, 8, "0.13"), (12, 12, "1.00"), (0, 5, "0.00")];
        for (n, d, want) in cases {
            assert_eq!(format_ratio(n, d, 2), want, "{n}/{d}");
        }
        assert_eq!(format_ratio(2, 3, 3), "0.667");
    }

    fn model(responses: Vec<Result<String, ProviderError>>) -> ModelUnderTest {
        let p = Arc::new(ScriptedProvider::sequence_results("m", responses));
        ModelUnderTest { name: "m".into(), agents: Agents::single(p, Arc::new(MockEmbedder::default())) }
    }

    fn suite(n: usize) -> (Vec<BenchConfig>, BTreeMap<String, GroundTruth>) {
        let configs: Vec<BenchConfig> = (0..n)
            .map(|i| BenchConfig { config_id: format!("c{i}"), config_text: "security = { ciphering_algorithms = (\"nea0\"); };\n".into() })
            .collect();
        let truths = configs
            .iter()
            .map(|c| {
                let mut t = truth(&["security.ciphering_algorithms"]);
                t.config_id = c.config_id.clone();
                t.reference_report_text = Some(NONCOMPLIANT.into());
                (c.config_id.clone(), t)
            })
            .collect();
        (configs, truths)
    }

    #[test]
    fn twelve_trials_and_summary() {
        let (configs, truths) = suite(4);
        let responses = (0..12).map(|i| Ok(if i % 4 == 0 { "Compliance Status: Compliant\n".into() } else { NONCOMPLIANT.into() })).collect();
        let opts = BenchmarkOptions { agent_options: AgentOptions { include_local_latency: false, ..AgentOptions::default() }, ..BenchmarkOptions::default() };
        let r = run_benchmark(&configs, &truths, &[RetrievalMode::NoRag], &[model(responses)], None, &opts).unwrap();
        assert_eq!(r.trials.len(), 12);
        let c = &r.cells[0];
        assert_eq!((c.correct, c.trials), (9, 12));
        assert_eq!(r.accuracy_text("m", RetrievalMode::NoRag).as_deref(), Some("0.75"));
        assert!(r.cells_match_trials());
        assert!(render_table(&r).contains("| Accuracy | No-RAG | 0.75 |"));
        assert_eq!(r.trials.iter().filter(|t| t.similarity == Some(1.0)).count(), 9);
    }

    #[test]
    fn errored_cells_are_flagged() {
        let (configs, truths) = suite(1);
        let responses = vec![Ok(NONCOMPLIANT.to_string()), Err(ProviderError::Timeout), Ok(NONCOMPLIANT.to_string())];
        let r = run_benchmark(&configs, &truths, &[RetrievalMode::NoRag], &[model(responses)], None, &BenchmarkOptions::default()).unwrap();
        let c = &r.cells[0];
        assert_eq!((c.trials, c.errored, c.invalid), (2, 1, true));
        let table = render_table(&r);
        assert!(table.contains("n/a*"));
        assert!(table.contains("25%"));
        assert_eq!(r.accuracy_text("m", RetrievalMode::NoRag), None);
    }

    #[test]
    fn empty_suite_and_missing_truth() {
        let m = model(vec![]);
        let opts = BenchmarkOptions::default();
        assert_eq!(run_benchmark(&[], &BTreeMap::new(), &RetrievalMode::ALL, std::slice::from_ref(&m), None, &opts).unwrap_err(), EvalError::EmptySuite);
        let (configs, _) = suite(1);
        assert!(matches!(run_benchmark(&configs, &BTreeMap::new(), &RetrievalMode::ALL, &[m], None, &opts), Err(EvalError::MissingTruth(_))));
    }
}
