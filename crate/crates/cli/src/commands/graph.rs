use std::io::Write;

use anyhow::Context;
use modigen_core::corpus::CorpusRecord;
use modigen_core::graph::{build_graph_from_records, load_graph, retrieve, save_graph};
use modigen_core::jsonl::read_jsonl;

use crate::{GraphBuildArgs, GraphQueryArgs};

pub fn build(args: &GraphBuildArgs) -> anyhow::Result<()> {
    let records: Vec<CorpusRecord> =
        read_jsonl(&args.corpus).with_context(|| args.corpus.display().to_string())?;
    let graph = build_graph_from_records(&records);
    save_graph(&graph, &args.out)?;
    log::info!(
        "graph: {} nodes, {} edges, {} components -> {}",
        graph.nodes.len(),
        graph.edges.len(),
        graph.component_index.len(),
        args.out.display()
    );
    Ok(())
}

pub fn query(args: &GraphQueryArgs) -> anyhow::Result<()> {
    let graph = load_graph(&args.index)?;
    let result = retrieve(&graph, &args.query, args.hops, args.budget);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for snippet in &result.snippets {
        serde_json::to_writer(&mut out, snippet)?;
        out.write_all(b"\n")?;
    }
    log::info!("{} snippets, {} chars", result.snippets.len(), result.total_chars);
    Ok(())
}
