use anyhow::Context;
use modigen_core::genclient::{
    assemble_prompt, Candidate, GenerationConfig, Sampler, TaskKind, DEFAULT_TOP_K,
};
use modigen_core::graph::{load_graph, retrieve, PropertyGraph};
use modigen_core::jsonl::write_jsonl_atomic;

use crate::GenerateArgs;

pub fn run(args: &GenerateArgs) -> anyhow::Result<()> {
    let kind: TaskKind = args.task.into();
    let tasks = super::read_bench(&args.bench)?;
    let tasks: Vec<_> = tasks.into_iter().filter(|t| t.kind == kind).collect();
    if tasks.is_empty() {
        anyhow::bail!("no tasks of the requested kind in {}", args.bench.display());
    }

    let graph: Option<PropertyGraph> = match &args.graph {
        Some(path) => Some(load_graph(path)?),
        None => None,
    };

    let config = GenerationConfig {
        model_name: args.model.clone(),
        endpoint_url: args.endpoint.clone(),
        temperature: args.temperature.unwrap_or_else(|| kind.default_temperature()),
        top_k: args.top_k.or(Some(DEFAULT_TOP_K)),
        top_k_capable: args.top_k_capable,
        n_samples: args.n,
        max_tokens: args.max_tokens,
        max_concurrent_requests: args.max_concurrent_requests,
        ..Default::default()
    };
    let sampler = Sampler::new(&config)?;

    let mut candidates: Vec<Candidate> = Vec::new();
    for task in &tasks {
        let retrieval = graph.as_ref().map(|g| retrieve(g, &task.prompt, args.hops, args.budget));
        let prompt = assemble_prompt(task, retrieval.as_ref());
        let sampled = sampler
            .sample(&task.id, &prompt)
            .with_context(|| format!("sampling task {}", task.id))?;
        log::info!("task {}: {} candidates", task.id, sampled.len());
        candidates.extend(sampled);
    }

    let written = write_jsonl_atomic(&candidates, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("wrote {written} candidates to {}", args.out.display());
    Ok(())
}
