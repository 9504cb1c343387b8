use std::collections::HashMap;

use anyhow::Context;
use modigen_core::feedback::{repair_loop, FeedbackConfig, RepairAttempt};
use modigen_core::genclient::{BenchTask, Candidate, GenerationConfig};
use modigen_core::jsonl::{read_jsonl, write_jsonl_atomic};
use modigen_core::validate::{resolve_specs, FunctionalSpec, ValidationReport};

use crate::RepairArgs;

pub fn run(args: &RepairArgs) -> anyhow::Result<()> {
    let candidates: Vec<Candidate> =
        read_jsonl(&args.candidates).with_context(|| args.candidates.display().to_string())?;
    let reports: Vec<ValidationReport> =
        read_jsonl(&args.reports).with_context(|| args.reports.display().to_string())?;
    let tasks = super::read_bench(&args.bench)?;
    let task_map: HashMap<String, BenchTask> =
        tasks.iter().map(|t| (t.id.clone(), t.clone())).collect();

    let setup = super::BackendSetup::new(&args.backend)?;
    let factory = setup.factory();
    let template = FunctionalSpec::new(Vec::new());
    let (specs, spec_errors) = resolve_specs(&tasks, &factory, args.refs.as_deref(), &template);
    for (task_id, message) in &spec_errors {
        log::warn!("no functional reference for task {task_id}: {message}");
    }

    let initial_reports: HashMap<(String, usize), ValidationReport> = reports
        .into_iter()
        .map(|r| ((r.task_id.clone(), r.sample_index), r))
        .collect();

    let client_config = GenerationConfig {
        model_name: args.model.clone(),
        endpoint_url: args.endpoint.clone(),
        n_samples: 1,
        ..Default::default()
    };
    let feedback_config = FeedbackConfig {
        max_rounds: args.rounds,
        include_failed_code: !args.exclude_failed_code,
    };

    let mut final_candidates: Vec<Candidate> = Vec::with_capacity(candidates.len());
    let mut final_reports: Vec<ValidationReport> = Vec::with_capacity(candidates.len());
    let mut all_attempts: Vec<RepairAttempt> = Vec::new();
    let mut repaired_count = 0usize;

    for candidate in &candidates {
        let key = (candidate.task_id.clone(), candidate.sample_index);
        let Some(task) = task_map.get(&candidate.task_id) else {
            log::warn!("candidate for unknown task {}", candidate.task_id);
            final_candidates.push(candidate.clone());
            if let Some(report) = initial_reports.get(&key) {
                final_reports.push(report.clone());
            }
            continue;
        };
        let initial = initial_reports.get(&key).cloned();
        if initial.as_ref().is_some_and(|r| r.pass_f) {
            final_candidates.push(candidate.clone());
            final_reports.push(initial.unwrap());
            continue;
        }
        let mut session = factory().map_err(|e| anyhow::anyhow!(e))?;
        let (final_candidate, attempts) = repair_loop(
            task,
            candidate,
            session.as_mut(),
            &client_config,
            &feedback_config,
            specs.get(&candidate.task_id),
            initial.clone(),
        )?;
        session.dispose();

        let final_report = attempts
            .last()
            .map(|a| a.report.clone())
            .or(initial)
            .unwrap_or_else(|| modigen_core::validate::unknown_task_report(candidate));
        if !attempts.is_empty() {
            repaired_count += 1;
        }
        all_attempts.extend(attempts);
        final_candidates.push(final_candidate);
        final_reports.push(final_report);
    }

    log::info!(
        "repaired {repaired_count} of {} candidates over {} attempts",
        candidates.len(),
        all_attempts.len()
    );

    write_jsonl_atomic(&final_candidates, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    write_jsonl_atomic(&all_attempts, &args.attempts_out)
        .with_context(|| format!("writing {}", args.attempts_out.display()))?;
    if let Some(reports_out) = &args.reports_out {
        write_jsonl_atomic(&final_reports, reports_out)
            .with_context(|| format!("writing {}", reports_out.display()))?;
    }
    Ok(())
}
