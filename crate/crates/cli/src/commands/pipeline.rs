//! `pipeline` chains generate -> validate -> repair -> evaluate from one
//! TOML or JSON config, leaving every inter-stage artifact as JSONL in the
//! output directory.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::Deserialize;

use modigen_core::feedback::{repair_loop_with_sampler, FeedbackConfig, RepairAttempt};
use modigen_core::genclient::{
    assemble_prompt, transport_for, BenchTask, Candidate, ChatTransport, GenerationConfig,
    Sampler, DEFAULT_TOP_K,
};
use modigen_core::graph::{load_graph, retrieve};
use modigen_core::jsonl::write_jsonl_atomic;
use modigen_core::metrics::{aggregate, render_report, ReportFormat};
use modigen_core::validate::{resolve_specs, validate_batch, FunctionalSpec};

use super::BackendSetup;
use crate::{BackendArg, BackendOpts, PipelineArgs};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineConfig {
    bench: PathBuf,
    out_dir: PathBuf,
    backend: BackendSection,
    generate: GenerateSection,
    #[serde(default)]
    repair: RepairSection,
    #[serde(default)]
    evaluate: EvaluateSection,
    #[serde(default)]
    refs_dir: Option<PathBuf>,
    #[serde(default = "default_workers")]
    workers: usize,
}

fn default_workers() -> usize {
    2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendSection {
    kind: String,
    #[serde(default)]
    fixture: Option<PathBuf>,
    #[serde(default)]
    omc_path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateSection {
    endpoint: String,
    model: String,
    #[serde(default = "default_n_samples")]
    n_samples: usize,
    #[serde(default)]
    temperature: Option<f64>,
    #[serde(default)]
    top_k: Option<u32>,
    #[serde(default)]
    top_k_capable: bool,
    #[serde(default = "default_max_tokens")]
    max_tokens: usize,
    #[serde(default = "default_concurrency")]
    max_concurrent_requests: usize,
    #[serde(default)]
    graph: Option<GraphSection>,
}

fn default_n_samples() -> usize {
    1
}

fn default_max_tokens() -> usize {
    2048
}

fn default_concurrency() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphSection {
    index: PathBuf,
    #[serde(default = "default_hops")]
    hops: usize,
    #[serde(default = "default_budget")]
    budget: usize,
}

fn default_hops() -> usize {
    modigen_core::graph::DEFAULT_HOPS
}

fn default_budget() -> usize {
    modigen_core::graph::DEFAULT_CHAR_BUDGET
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RepairSection {
    #[serde(default)]
    rounds: usize,
    /// Separate endpoint for repair responses; defaults to sharing the
    /// generation transport (and its replay cursor).
    #[serde(default)]
    endpoint: Option<String>,
    #[serde(default = "default_true")]
    include_failed_code: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateSection {
    #[serde(default)]
    scenario: Option<usize>,
    #[serde(default)]
    per_task: bool,
}

fn load_config(path: &std::path::Path) -> anyhow::Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let config = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text)?
    } else {
        serde_json::from_str(&text)?
    };
    Ok(config)
}

fn backend_opts(section: &BackendSection) -> anyhow::Result<BackendOpts> {
    let backend = match section.kind.as_str() {
        "micro" => BackendArg::Micro,
        "mock" => BackendArg::Mock,
        "omc" => BackendArg::Omc,
        other => bail!("unknown backend kind '{other}' (expected micro|mock|omc)"),
    };
    Ok(BackendOpts {
        backend,
        omc_path: section.omc_path.clone(),
        fixture: section.fixture.clone(),
    })
}

pub fn run(args: &PipelineArgs) -> anyhow::Result<()> {
    let config = load_config(&args.config)?;
    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| config.out_dir.display().to_string())?;
    let tasks = super::read_bench(&config.bench)?;
    if tasks.is_empty() {
        bail!("bench {} has no tasks", config.bench.display());
    }

    let graph = match &config.generate.graph {
        Some(section) => Some((load_graph(&section.index)?, section.hops, section.budget)),
        None => None,
    };

    // Stage 1: generation. One shared transport; per-task sampler so each
    // task family samples at its own temperature.
    let base_config = GenerationConfig {
        model_name: config.generate.model.clone(),
        endpoint_url: config.generate.endpoint.clone(),
        top_k: config.generate.top_k.or(Some(DEFAULT_TOP_K)),
        top_k_capable: config.generate.top_k_capable,
        n_samples: config.generate.n_samples,
        max_tokens: config.generate.max_tokens,
        max_concurrent_requests: config.generate.max_concurrent_requests,
        ..Default::default()
    };
    let gen_transport: Arc<dyn ChatTransport> = Arc::from(transport_for(&base_config)?);

    let mut candidates: Vec<Candidate> = Vec::new();
    for task in &tasks {
        let retrieval = graph
            .as_ref()
            .map(|(g, hops, budget)| retrieve(g, &task.prompt, *hops, *budget));
        let prompt = assemble_prompt(task, retrieval.as_ref());
        let task_config = GenerationConfig {
            temperature: config
                .generate
                .temperature
                .unwrap_or_else(|| task.kind.default_temperature()),
            ..base_config.clone()
        };
        let sampler =
            Sampler::with_transport(&task_config, Box::new(gen_transport.clone()))?;
        let sampled =
            sampler.sample(&task.id, &prompt).with_context(|| format!("task {}", task.id))?;
        candidates.extend(sampled);
    }
    let candidates_path = config.out_dir.join("candidates.jsonl");
    write_jsonl_atomic(&candidates, &candidates_path)?;
    log::info!("stage 1: {} candidates -> {}", candidates.len(), candidates_path.display());

    // Stage 2: validation.
    let opts = backend_opts(&config.backend)?;
    let setup = BackendSetup::new(&opts)?;
    let factory = setup.factory();
    let template = FunctionalSpec::new(Vec::new());
    let (specs, spec_errors) =
        resolve_specs(&tasks, &factory, config.refs_dir.as_deref(), &template);
    for (task_id, message) in &spec_errors {
        log::warn!("no functional reference for task {task_id}: {message}");
    }
    let task_map: HashMap<String, BenchTask> =
        tasks.iter().map(|t| (t.id.clone(), t.clone())).collect();
    let reports = validate_batch(&candidates, &task_map, &factory, &specs, config.workers);
    let reports_path = config.out_dir.join("reports.jsonl");
    write_jsonl_atomic(&reports, &reports_path)?;
    log::info!("stage 2: {} reports -> {}", reports.len(), reports_path.display());

    // Stage 3: feedback repair.
    let final_reports = if config.repair.rounds > 0 {
        let repair_transport: Arc<dyn ChatTransport> = match &config.repair.endpoint {
            Some(endpoint) => {
                let cfg = GenerationConfig { endpoint_url: endpoint.clone(), ..base_config.clone() };
                Arc::from(transport_for(&cfg)?)
            }
            None => gen_transport.clone(),
        };
        let feedback_config = FeedbackConfig {
            max_rounds: config.repair.rounds,
            include_failed_code: config.repair.include_failed_code,
        };
        let mut final_candidates = Vec::with_capacity(candidates.len());
        let mut final_reports = Vec::with_capacity(candidates.len());
        let mut attempts_log: Vec<RepairAttempt> = Vec::new();
        for (candidate, report) in candidates.iter().zip(&reports) {
            if report.pass_f {
                final_candidates.push(candidate.clone());
                final_reports.push(report.clone());
                continue;
            }
            let task = &task_map[&candidate.task_id];
            let repair_config = GenerationConfig {
                temperature: task.kind.default_temperature(),
                n_samples: 1,
                ..base_config.clone()
            };
            let sampler =
                Sampler::with_transport(&repair_config, Box::new(repair_transport.clone()))?;
            let mut session = factory().map_err(|e| anyhow::anyhow!(e))?;
            let (final_candidate, attempts) = repair_loop_with_sampler(
                task,
                candidate,
                session.as_mut(),
                &sampler,
                &feedback_config,
                specs.get(&candidate.task_id),
                Some(report.clone()),
            )?;
            session.dispose();
            let final_report =
                attempts.last().map(|a| a.report.clone()).unwrap_or_else(|| report.clone());
            attempts_log.extend(attempts);
            final_candidates.push(final_candidate);
            final_reports.push(final_report);
        }
        let repaired_path = config.out_dir.join("repaired.jsonl");
        let attempts_path = config.out_dir.join("attempts.jsonl");
        write_jsonl_atomic(&final_candidates, &repaired_path)?;
        write_jsonl_atomic(&attempts_log, &attempts_path)?;
        let final_reports_path = config.out_dir.join("final_reports.jsonl");
        write_jsonl_atomic(&final_reports, &final_reports_path)?;
        log::info!("stage 3: {} attempts -> {}", attempts_log.len(), attempts_path.display());
        final_reports
    } else {
        reports
    };

    // Stage 4: evaluation over the latest reports.
    let scenario = config
        .evaluate
        .scenario
        .unwrap_or_else(|| tasks[0].kind.default_scenario());
    let results = super::evaluate::task_results(&final_reports);
    let mut metrics = aggregate(&results, scenario)?;
    for task_id in &metrics.excluded {
        log::warn!("task {task_id} excluded: fewer than {scenario} samples");
    }
    if config.evaluate.per_task {
        metrics.per_task = results;
    }
    let metrics_path = config.out_dir.join("metrics.csv");
    modigen_core::jsonl::write_atomic(
        &metrics_path,
        render_report(&metrics, ReportFormat::Csv).as_bytes(),
    )?;
    log::info!(
        "stage 4: pass_s@1={:.4} pass_f@1={:.4} -> {}",
        metrics.pass_s_at_1,
        metrics.pass_f_at_1,
        metrics_path.display()
    );
    Ok(())
}
