use anyhow::Context;
use modigen_core::corpus::{
    build_records, build_sft_records, dedupe, emit_jsonl, emit_reject_log, emit_sft_jsonl,
    filter_records, scan_library, FilterPolicy, RejectionLog,
};

use crate::PreprocessArgs;

pub fn run(args: &PreprocessArgs) -> anyhow::Result<()> {
    let outcome = scan_library(&args.lib_root, &args.lib_name, &args.modelica_version)?;
    for (path, message) in &outcome.errors {
        log::warn!("skipping {}: {message}", path.display());
    }
    log::info!("scanned {} source units", outcome.units.len());

    let (records, mut rejections) = build_records(&outcome.units);

    let policy = FilterPolicy { max_model_chars: args.max_model_chars, ..Default::default() };
    let (kept, filter_log) = filter_records(records, &policy);
    rejections.merge(filter_log);

    let (unique, dedupe_log) = dedupe(kept);
    rejections.merge(dedupe_log);

    let written = emit_jsonl(&unique, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    log::info!("wrote {written} records to {}", args.out.display());
    summarize(&rejections);

    if let Some(sft_out) = &args.sft_out {
        let instruction = read_template(args.instruction_template.as_deref())?;
        let query = read_template(args.query_template.as_deref())?;
        let sft = build_sft_records(&unique, &instruction, &query)?;
        let written =
            emit_sft_jsonl(&sft, sft_out).with_context(|| format!("writing {}", sft_out.display()))?;
        log::info!("wrote {written} SFT records to {}", sft_out.display());
    }

    if let Some(reject_log) = &args.reject_log {
        emit_reject_log(&rejections, reject_log)
            .with_context(|| format!("writing {}", reject_log.display()))?;
    }
    Ok(())
}

fn read_template(path: Option<&std::path::Path>) -> anyhow::Result<String> {
    match path {
        Some(path) => Ok(std::fs::read_to_string(path)
            .with_context(|| path.display().to_string())?
            .trim_end()
            .to_string()),
        None => anyhow::bail!("--sft-out requires --instruction-template and --query-template"),
    }
}

fn summarize(log: &RejectionLog) {
    use std::collections::BTreeMap;
    let mut by_reason: BTreeMap<String, usize> = BTreeMap::new();
    for entry in &log.entries {
        *by_reason.entry(format!("{:?}", entry.reason)).or_insert(0) += 1;
    }
    for (reason, count) in by_reason {
        log::info!("rejected {count} records: {reason}");
    }
}
