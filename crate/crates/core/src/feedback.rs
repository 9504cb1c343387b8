//! Iterative feedback optimization: turn validation diagnostics into repair
//! prompts, regenerate one candidate per round, and revalidate until the
//! code passes or the round budget runs out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genclient::{BenchTask, Candidate, GenError, GenerationConfig, Sampler};
use crate::simbackend::{BackendSession, Severity, ValidationStage};
use crate::validate::{run_pipeline, FunctionalSpec, StageStatus, ValidationReport};

/// Feedback sentence for functional-validation failures.
pub const FUNCTIONAL_FAILURE_MESSAGE: &str =
    "The current simulation results do not match the expected values!";

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("report has no failing stage; nothing to repair")]
    NoFailure,
    #[error(transparent)]
    Generation(#[from] GenError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackConfig {
    pub max_rounds: usize,
    pub include_failed_code: bool,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        FeedbackConfig { max_rounds: 1, include_failed_code: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepairAttempt {
    /// 1-based repair round; equals the candidate's round.
    pub round: usize,
    pub repair_prompt: String,
    pub candidate: Candidate,
    pub report: ValidationReport,
}

/// Compose the repair prompt: original prompt, optionally the failed code,
/// then the failure evidence. Load/check/simulate failures carry the
/// verbatim error diagnostics (with line:column when available); a
/// functional failure carries the fixed feedback sentence.
pub fn build_repair_prompt(
    original_prompt: &str,
    failed_code: &str,
    report: &ValidationReport,
) -> Result<String, FeedbackError> {
    let failed_stage = report
        .stages
        .iter()
        .find(|s| s.status == StageStatus::Fail)
        .ok_or(FeedbackError::NoFailure)?;

    let mut out = String::from(original_prompt);
    out.push_str("\n\nPrevious attempt:\n");
    if !failed_code.is_empty() {
        out.push_str(failed_code);
        out.push('\n');
    }
    out.push_str("\nErrors:\n");
    if failed_stage.stage == ValidationStage::Functional {
        out.push_str(FUNCTIONAL_FAILURE_MESSAGE);
        out.push('\n');
    } else {
        for diagnostic in &failed_stage.diagnostics {
            if diagnostic.severity != Severity::Error {
                continue;
            }
            match (diagnostic.line, diagnostic.column) {
                (Some(line), Some(column)) => {
                    out.push_str(&format!("{} at {line}:{column}\n", diagnostic.message))
                }
                _ => {
                    out.push_str(&diagnostic.message);
                    out.push('\n');
                }
            }
        }
    }
    Ok(out)
}

/// Run the repair loop for one candidate. Rounds continue while the latest
/// report fails and the budget allows; each round samples exactly one new
/// candidate at the task's temperature and revalidates it. Returns the final
/// candidate and the full attempt history.
#[allow(clippy::too_many_arguments)]
pub fn repair_loop(
    task: &BenchTask,
    candidate: &Candidate,
    session: &mut dyn BackendSession,
    client_config: &GenerationConfig,
    feedback_config: &FeedbackConfig,
    spec: Option<&FunctionalSpec>,
    initial_report: Option<ValidationReport>,
) -> Result<(Candidate, Vec<RepairAttempt>), FeedbackError> {
    let mut config = client_config.clone();
    config.n_samples = 1;
    config.temperature = task.kind.default_temperature();
    let sampler = Sampler::new(&config)?;
    repair_loop_with_sampler(task, candidate, session, &sampler, feedback_config, spec, initial_report)
}

/// As [`repair_loop`] with a caller-supplied sampler (tests inject scripted
/// transports here).
pub fn repair_loop_with_sampler(
    task: &BenchTask,
    candidate: &Candidate,
    session: &mut dyn BackendSession,
    sampler: &Sampler,
    feedback_config: &FeedbackConfig,
    spec: Option<&FunctionalSpec>,
    initial_report: Option<ValidationReport>,
) -> Result<(Candidate, Vec<RepairAttempt>), FeedbackError> {
    let mut current = candidate.clone();
    let mut report =
        initial_report.unwrap_or_else(|| run_pipeline(&current, task, session, spec));
    let mut attempts = Vec::new();

    while !report.pass_f && attempts.len() < feedback_config.max_rounds {
        let round = attempts.len() + 1;
        let failed_code =
            if feedback_config.include_failed_code { current.code.as_str() } else { "" };
        let repair_prompt = build_repair_prompt(&task.prompt, failed_code, &report)?;

        let mut repaired = sampler
            .sample(&task.id, &repair_prompt)?
            .into_iter()
            .next()
            .expect("sampler returns n_samples=1 candidates");
        repaired.sample_index = current.sample_index;
        repaired.round = round;

        let new_report = run_pipeline(&repaired, task, session, spec);
        attempts.push(RepairAttempt {
            round,
            repair_prompt,
            candidate: repaired.clone(),
            report: new_report.clone(),
        });
        current = repaired;
        report = new_report;
    }

    Ok((current, attempts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simbackend::Diagnostic;
    use crate::validate::StageOutcome;

    fn report_with(stage_statuses: [StageStatus; 4], diagnostics: Vec<Diagnostic>) -> ValidationReport {
        use ValidationStage::*;
        let stages = [Load, Check, Simulate, Functional]
            .into_iter()
            .zip(stage_statuses)
            .map(|(stage, status)| StageOutcome {
                stage,
                status,
                diagnostics: if status == StageStatus::Fail { diagnostics.clone() } else { Vec::new() },
                elapsed: 0.0,
            })
            .collect();
        ValidationReport {
            task_id: "t".into(),
            sample_index: 0,
            round: 0,
            stages,
            pass_s: false,
            pass_f: false,
        }
    }

    #[test]
    fn load_failure_message_passes_through_verbatim() {
        let report = report_with(
            [StageStatus::Fail, StageStatus::NotRun, StageStatus::NotRun, StageStatus::NotRun],
            vec![Diagnostic::error(ValidationStage::Load, "missing semicolon at 3:14")],
        );
        let prompt = build_repair_prompt("original", "model X", &report).unwrap();
        assert!(prompt.contains("missing semicolon at 3:14"));
        assert!(prompt.starts_with("original"));
        assert!(prompt.contains("model X"));
    }

    #[test]
    fn located_diagnostics_carry_position() {
        let report = report_with(
            [StageStatus::Fail, StageStatus::NotRun, StageStatus::NotRun, StageStatus::NotRun],
            vec![Diagnostic::error_at(ValidationStage::Load, "unexpected token 'end'", 3, 14)],
        );
        let prompt = build_repair_prompt("p", "", &report).unwrap();
        assert!(prompt.contains("unexpected token 'end' at 3:14"));
    }

    #[test]
    fn functional_failure_uses_fixed_sentence() {
        let report = report_with(
            [StageStatus::Pass, StageStatus::Pass, StageStatus::Pass, StageStatus::Fail],
            vec![Diagnostic::error(ValidationStage::Functional, "'y': NMSE 2e-2 exceeds threshold")],
        );
        let prompt = build_repair_prompt("p", "code", &report).unwrap();
        assert!(prompt.contains(FUNCTIONAL_FAILURE_MESSAGE));
        // The NMSE detail is not the contract; the sentence is.
        assert!(!prompt.contains("NMSE"));
    }

    #[test]
    fn all_pass_report_is_a_caller_bug() {
        let report = report_with(
            [StageStatus::Pass, StageStatus::Pass, StageStatus::Pass, StageStatus::Pass],
            vec![],
        );
        assert!(matches!(
            build_repair_prompt("p", "", &report),
            Err(FeedbackError::NoFailure)
        ));
    }
}
