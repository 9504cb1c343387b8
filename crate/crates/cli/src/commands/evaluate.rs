use std::collections::BTreeMap;

use anyhow::Context;
use modigen_core::jsonl::read_jsonl;
use modigen_core::metrics::{aggregate, render_report, ReportFormat, TaskResult};
use modigen_core::validate::ValidationReport;

use crate::{EvaluateArgs, FormatArg};

/// Collapse reports to one per (task, sample) — the highest round stands in
/// for the sample — then count per task.
pub fn task_results(reports: &[ValidationReport]) -> Vec<TaskResult> {
    let mut latest: BTreeMap<(String, usize), &ValidationReport> = BTreeMap::new();
    for report in reports {
        let key = (report.task_id.clone(), report.sample_index);
        match latest.get(&key) {
            Some(existing) if existing.round >= report.round => {}
            _ => {
                latest.insert(key, report);
            }
        }
    }
    let mut by_task: BTreeMap<String, TaskResult> = BTreeMap::new();
    for ((task_id, _), report) in latest {
        let entry = by_task.entry(task_id.clone()).or_insert_with(|| TaskResult {
            task_id,
            n: 0,
            c_s: 0,
            c_f: 0,
        });
        entry.n += 1;
        if report.pass_s {
            entry.c_s += 1;
        }
        if report.pass_f {
            entry.c_f += 1;
        }
    }
    by_task.into_values().collect()
}

pub fn run(args: &EvaluateArgs) -> anyhow::Result<()> {
    let reports: Vec<ValidationReport> =
        read_jsonl(&args.reports).with_context(|| args.reports.display().to_string())?;
    let results = task_results(&reports);
    let mut metrics = aggregate(&results, args.scenario)?;
    for task_id in &metrics.excluded {
        log::warn!("task {task_id} excluded: fewer than {} samples", args.scenario);
    }
    if args.per_task {
        metrics.per_task = results;
    }
    let format = match args.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    let rendered = render_report(&metrics, format);
    modigen_core::jsonl::write_atomic(&args.out, rendered.as_bytes())
        .with_context(|| format!("writing {}", args.out.display()))?;
    log::info!(
        "pass_s@1={:.4} pass_f@1={:.4} -> {}",
        metrics.pass_s_at_1,
        metrics.pass_f_at_1,
        args.out.display()
    );
    Ok(())
}
