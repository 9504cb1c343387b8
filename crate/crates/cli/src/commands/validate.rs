use std::collections::HashMap;

use anyhow::Context;
use modigen_core::genclient::{BenchTask, Candidate};
use modigen_core::jsonl::{read_jsonl, write_jsonl_atomic};
use modigen_core::validate::{resolve_specs, validate_batch, FunctionalSpec};

use crate::ValidateArgs;

pub fn run(args: &ValidateArgs) -> anyhow::Result<()> {
    let candidates: Vec<Candidate> =
        read_jsonl(&args.candidates).with_context(|| args.candidates.display().to_string())?;
    let tasks = super::read_bench(&args.bench)?;

    let setup = super::BackendSetup::new(&args.backend)?;
    let factory = setup.factory();

    let template = FunctionalSpec::new(Vec::new());
    let (specs, spec_errors) =
        resolve_specs(&tasks, &factory, args.refs.as_deref(), &template);
    for (task_id, message) in &spec_errors {
        log::warn!("no functional reference for task {task_id}: {message}");
    }

    let task_map: HashMap<String, BenchTask> =
        tasks.into_iter().map(|t| (t.id.clone(), t)).collect();
    let reports = validate_batch(&candidates, &task_map, &factory, &specs, args.workers);

    let passed_s = reports.iter().filter(|r| r.pass_s).count();
    let passed_f = reports.iter().filter(|r| r.pass_f).count();
    log::info!("{}/{} pass_s, {passed_f} pass_f", passed_s, reports.len());

    let written = write_jsonl_atomic(&reports, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("wrote {written} reports to {}", args.out.display());
    Ok(())
}
