use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::assess::{assess_compliance, reflect, AssessmentRun, RunLogEntry};
use super::{AgentError, AgentOptions, Agents, ComplianceReport, ComplianceStatus, ReflectionFeedback, RetrievalMode};
use crate::digest::duration_secs;
use crate::knowledge_base::KnowledgeStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopStatus {
    Converged,
    Escalated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub final_report: ComplianceReport,
    pub iterations_used: usize,
    pub outcome: LoopStatus,
    pub last_verified_compliant: Option<String>,
    pub reflection_history: Vec<ReflectionFeedback>,
    pub assessments: Vec<AssessmentRun>,
    /// Assessment latencies plus reflection call latencies.
    #[serde(with = "duration_secs")]
    pub total_latency: Duration,
    pub run_log: Vec<RunLogEntry>,
}

impl LoopOutcome {
    pub fn converged(&self) -> bool {
        self.outcome == LoopStatus::Converged
    }
}

/// A loop that stopped on an error, with everything completed before it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("compliance loop failed after {} completed iterations: {error}", .reflection_history.len())]
pub struct LoopError {
    pub error: AgentError,
    pub reports: Vec<ComplianceReport>,
    pub reflection_history: Vec<ReflectionFeedback>,
}

/// Assess, then reflect, until the reflection has nothing left to fix or
/// `options.max_iterations` is spent.
///
/// On convergence the verified state is the corrected configuration, or the
/// submitted one when it was already compliant. An escalated loop keeps
/// `prior_verified`, the last state verified by an earlier run.
pub fn run_compliance_loop(
    agents: &Agents,
    options: &AgentOptions,
    mode: RetrievalMode,
    config_text: &str,
    store: Option<&KnowledgeStore>,
    prior_verified: Option<&str>,
    event_context: Option<&str>,
) -> Result<LoopOutcome, LoopError> {
    let mut reports: Vec<ComplianceReport> = Vec::new();
    let mut history: Vec<ReflectionFeedback> = Vec::new();
    let mut assessments: Vec<AssessmentRun> = Vec::new();
    let mut run_log = Vec::new();
    let mut total = Duration::ZERO;

    if options.max_iterations == 0 {
        return Err(LoopError {
            error: AgentError::InvalidInput("max_iterations must be at least 1".into()),
            reports,
            reflection_history: history,
        });
    }

    for iteration in 1..=options.max_iterations {
        let run = match assess_compliance(agents, options, mode, config_text, store, history.last(), event_context) {
            Ok(run) => run,
            Err(error) => return Err(LoopError { error, reports, reflection_history: history }),
        };
        let (feedback, ex) = match reflect(config_text, &run.report, agents.reflector.as_ref()) {
            Ok(v) => v,
            Err(error) => {
                reports.push(run.report);
                return Err(LoopError { error, reports, reflection_history: history });
            }
        };
        total += run.latency + ex.latency;
        run_log.extend(run.log.iter().cloned());
        run_log.push(RunLogEntry {
            step: "reflection".into(),
            model: Some(ex.model_name.clone()),
            fingerprint: Some(ex.fingerprint.clone()),
            latency: ex.latency,
            detail: format!("iteration {iteration}: {} issues", feedback.issues.len()),
        });
        reports.push(run.report.clone());
        assessments.push(run);
        let converged = feedback.converged();
        history.push(feedback);

        if converged {
            let report = reports.pop().expect("one report per iteration");
            let verified = match report.status {
                ComplianceStatus::Compliant => config_text.to_string(),
                ComplianceStatus::NonCompliant => report.corrected_config.clone().expect("non-compliant reports carry a correction"),
            };
            return Ok(LoopOutcome {
                final_report: report,
                iterations_used: iteration,
                outcome: LoopStatus::Converged,
                last_verified_compliant: Some(verified),
                reflection_history: history,
                assessments,
                total_latency: total,
                run_log,
            });
        }
    }

    Ok(LoopOutcome {
        final_report: reports.pop().expect("at least one iteration ran"),
        iterations_used: options.max_iterations,
        outcome: LoopStatus::Escalated,
        last_verified_compliant: prior_verified.map(str::to_string),
        reflection_history: history,
        assessments,
        total_latency: total,
        run_log,
    })
}
