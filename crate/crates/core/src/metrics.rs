//! pass@k estimation and evaluation-report rendering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("pass@k domain error: {0}")]
    Domain(String),
    #[error("no task results to aggregate")]
    EmptyInput,
}

/// Per-task sample counts: n generated, c_s passing simulation, c_f passing
/// functional validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub n: usize,
    pub c_s: usize,
    pub c_f: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: usize,
    pub pass_s_at_1: f64,
    pub pass_s_at_scenario: f64,
    pub pass_f_at_1: f64,
    pub pass_f_at_scenario: f64,
    /// Per-task breakdown (empty unless requested).
    pub per_task: Vec<TaskResult>,
    /// Tasks dropped because they have fewer than `scenario` samples.
    pub excluded: Vec<String>,
}

/// Unbiased pass@k estimator: 1 - C(n-c, k) / C(n, k), evaluated in the
/// numerically stable product form 1 - prod_{i=n-c+1..n} (1 - k/i).
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, MetricsError> {
    if k == 0 || k > n {
        return Err(MetricsError::Domain(format!("k={k} outside 1..={n}")));
    }
    if c > n {
        return Err(MetricsError::Domain(format!("c={c} exceeds n={n}")));
    }
    if n.saturating_sub(c) < k {
        // Too few failures to fill a k-draw: some draw always passes.
        return Ok(1.0);
    }
    if k == 1 {
        return Ok(c as f64 / n as f64);
    }
    let mut failure_prob = 1.0f64;
    for i in (n - c + 1)..=n {
        failure_prob *= 1.0 - k as f64 / i as f64;
    }
    Ok(1.0 - failure_prob)
}

/// Mean pass@1 and pass@scenario over tasks. Tasks with fewer than
/// `scenario` samples are excluded and reported in `excluded`.
pub fn aggregate(results: &[TaskResult], scenario: usize) -> Result<MetricsReport, MetricsError> {
    if scenario == 0 {
        return Err(MetricsError::Domain("scenario must be at least 1".into()));
    }
    let (usable, excluded): (Vec<&TaskResult>, Vec<&TaskResult>) =
        results.iter().partition(|r| r.n >= scenario);
    for task in &excluded {
        log::warn!(
            "task {} has n={} < scenario={scenario}; excluded from aggregate",
            task.task_id,
            task.n
        );
    }
    if usable.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mean = |k: usize, pick: fn(&TaskResult) -> usize| -> Result<f64, MetricsError> {
        let mut sum = 0.0;
        for task in &usable {
            sum += pass_at_k(task.n, pick(task), k)?;
        }
        Ok(sum / usable.len() as f64)
    };
    Ok(MetricsReport {
        scenario,
        pass_s_at_1: mean(1, |t| t.c_s)?,
        pass_s_at_scenario: mean(scenario, |t| t.c_s)?,
        pass_f_at_1: mean(1, |t| t.c_f)?,
        pass_f_at_scenario: mean(scenario, |t| t.c_f)?,
        per_task: Vec::new(),
        excluded: excluded.iter().map(|t| t.task_id.clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

fn fmt(value: f64) -> String {
    format!("{value:.4}")
}

/// Render the aggregate metrics plus a per-task table (header-only when the
/// breakdown is empty). Values use '.' decimals with 4 fractional digits.
pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    let k = report.scenario;
    match format {
        ReportFormat::Csv => {
            let mut out = String::new();
            out.push_str(&format!("pass_s@1,pass_s@{k},pass_f@1,pass_f@{k}\n"));
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt(report.pass_s_at_1),
                fmt(report.pass_s_at_scenario),
                fmt(report.pass_f_at_1),
                fmt(report.pass_f_at_scenario)
            ));
            out.push('\n');
            out.push_str(&format!("task_id,n,c_s,c_f,pass_s@1,pass_s@{k},pass_f@1,pass_f@{k}\n"));
            for task in &report.per_task {
                out.push_str(&render_task_row(task, k, ","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str(&format!("| Metric | @1 | @{k} |\n"));
            out.push_str("|---|---|---|\n");
            out.push_str(&format!(
                "| pass_s | {} | {} |\n",
                fmt(report.pass_s_at_1),
                fmt(report.pass_s_at_scenario)
            ));
            out.push_str(&format!(
                "| pass_f | {} | {} |\n",
                fmt(report.pass_f_at_1),
                fmt(report.pass_f_at_scenario)
            ));
            out.push('\n');
            out.push_str(&format!(
                "| Task | n | c_s | c_f | pass_s@1 | pass_s@{k} | pass_f@1 | pass_f@{k} |\n"
            ));
            out.push_str("|---|---|---|---|---|---|---|---|\n");
            for task in &report.per_task {
                out.push_str(&format!("| {} |\n", render_task_row(task, k, " | ")));
            }
            out
        }
    }
}

fn render_task_row(task: &TaskResult, k: usize, sep: &str) -> String {
    let at = |c: usize, k: usize| pass_at_k(task.n, c, k).map(fmt).unwrap_or_else(|_| "-".into());
    [
        task.task_id.clone(),
        task.n.to_string(),
        task.c_s.to_string(),
        task.c_f.to_string(),
        at(task.c_s, 1),
        at(task.c_s, k),
        at(task.c_f, 1),
        at(task.c_f, k),
    ]
    .join(sep)
}
