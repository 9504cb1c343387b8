//! Graph construction and retrieval checked against hand-enumerated edge
//! counts from the two reference models and an independent scoring oracle.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use modigen_core::corpus::CorpusRecord;
use modigen_core::frontend::{parse_unit, Component};
use modigen_core::graph::{
    build_graph, load_graph, retrieve, save_graph, EdgeKind, GraphError, NodeKind, PropertyGraph,
};

fn fixture(name: &str) -> Vec<Component> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus").join(name);
    parse_unit(&fs::read_to_string(path).unwrap()).unwrap()
}

fn edge_count(graph: &PropertyGraph, kind: EdgeKind) -> usize {
    graph.edges.iter().filter(|e| e.kind == kind).count()
}

#[test]
fn test_real_great_edges_and_stubs() {
    let components = fixture("Test_RealGreat.mo");
    let graph = build_graph(&components, &[]);

    assert_eq!(edge_count(&graph, EdgeKind::Instantiation), 3);
    assert_eq!(edge_count(&graph, EdgeKind::Connection), 2);
    assert_eq!(edge_count(&graph, EdgeKind::Extension), 0);

    // Connect endpoints referencing instantiated members become stub
    // interface nodes.
    for endpoint in ["sine.y", "cosine.y", "great.u1", "great.u2"] {
        let node = graph
            .nodes
            .iter()
            .find(|n| n.kind == NodeKind::Interface && n.label.ends_with(endpoint))
            .unwrap_or_else(|| panic!("missing stub interface for {endpoint}"));
        assert!(node.is_stub(), "{endpoint} should be a stub");
    }

    // The three instantiation targets are stub components.
    for target in [
        "IndustrialControlSystems.Logical.Comparisons.RealType.Great",
        "Modelica.Blocks.Sources.Sine",
        "Modelica.Blocks.Sources.Cosine",
    ] {
        let id = graph.component_index[target];
        assert!(graph.nodes[id as usize].is_stub());
    }
}

#[test]
fn bouncing_ball_nodes_and_invocations() {
    let components = fixture("BouncingBall.mo");
    let graph = build_graph(&components, &[]);

    assert_eq!(edge_count(&graph, EdgeKind::Connection), 0);
    assert_eq!(edge_count(&graph, EdgeKind::Extension), 0);
    assert_eq!(edge_count(&graph, EdgeKind::Instantiation), 0);

    let parameter_nodes: Vec<_> =
        graph.nodes.iter().filter(|n| n.kind == NodeKind::Parameter).collect();
    assert!(parameter_nodes.len() >= 3, "g, c, radius expected");

    let equation_nodes: Vec<_> =
        graph.nodes.iter().filter(|n| n.kind == NodeKind::Equation).collect();
    assert_eq!(equation_nodes.len(), 3);

    // Every equation invokes the members its text references; the union must
    // be exactly {height, velocity, g, c} (the misspelled `redius` resolves
    // to nothing).
    let by_id: HashMap<u64, &str> =
        graph.nodes.iter().map(|n| (n.id, n.label.as_str())).collect();
    let eq_ids: Vec<u64> = equation_nodes.iter().map(|n| n.id).collect();
    let mut invoked: Vec<&str> = graph
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Invocation && eq_ids.contains(&e.src))
        .map(|e| by_id[&e.dst])
        .collect();
    invoked.sort();
    invoked.dedup();
    assert_eq!(
        invoked,
        vec![
            "BouncingBall.c",
            "BouncingBall.g",
            "BouncingBall.height",
            "BouncingBall.velocity"
        ]
    );
}

#[test]
fn build_is_deterministic_over_ten_runs() {
    let mut components = fixture("Test_RealGreat.mo");
    components.extend(fixture("BouncingBall.mo"));
    let first = build_graph(&components, &[]);
    for _ in 0..9 {
        assert_eq!(build_graph(&components, &[]), first);
    }
}

#[test]
fn every_edge_endpoint_exists() {
    let mut components = Vec::new();
    for file in ["Test_RealGreat.mo", "BouncingBall.mo", "NestedPackage.mo", "DrainingTank.mo"] {
        components.extend(fixture(file));
    }
    let graph = build_graph(&components, &[]);
    let n = graph.nodes.len() as u64;
    for edge in &graph.edges {
        assert!(edge.src < n && edge.dst < n);
    }
    // Extension resolves within the same unit: Damped -> Mechanics.Oscillator.
    let damped = graph.component_index["Mechanics.Damped"];
    let oscillator = graph.component_index["Mechanics.Oscillator"];
    assert!(graph
        .edges
        .iter()
        .any(|e| e.kind == EdgeKind::Extension && e.src == damped && e.dst == oscillator));
}

fn great_fixture_graph() -> PropertyGraph {
    let mut components = fixture("Test_RealGreat.mo");
    // A corpus record for the Great comparison block itself.
    let great_source = "block Great \"Real comparison: true when u1 greater than u2\"\n  \
                        parameter Real Ts=0.1 \"Sampling time\";\n  parameter Real eps=0 \"Tolerance\";\n\
                        equation\nend Great;";
    let mut great = parse_unit(great_source).unwrap();
    great[0].qualified_name = "IndustrialControlSystems.Logical.Comparisons.RealType.Great".into();
    let record = CorpusRecord {
        modelica_version: "3.2".into(),
        description: "Real comparison: true when u1 greater than u2".into(),
        documentation: "Outputs true while the first real input exceeds the second.".into(),
        model: great_source.into(),
        source: "IndustrialControlSystems.Logical.Comparisons.RealType".into(),
    };
    components.extend(great);
    build_graph(&components, &[record])
}

/// Exhaustive re-scoring oracle: term frequency over label (2x) and
/// attribute values (1x), lowercase alphanumeric tokens.
fn oracle_scores(graph: &PropertyGraph, query: &str) -> Vec<(u64, f64)> {
    let terms: Vec<String> = query
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect();
    graph
        .nodes
        .iter()
        .map(|node| {
            let mut score = 0.0;
            for term in &terms {
                let label_hits = node
                    .label
                    .to_lowercase()
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|t| t == term)
                    .count();
                let attr_hits: usize = node
                    .attributes
                    .values()
                    .map(|v| {
                        v.to_lowercase()
                            .split(|c: char| !c.is_alphanumeric())
                            .filter(|t| t == term)
                            .count()
                    })
                    .sum();
                score += 2.0 * label_hits as f64 + attr_hits as f64;
            }
            (node.id, score)
        })
        .collect()
}

#[test]
fn retrieval_finds_great_component() {
    let graph = great_fixture_graph();
    let result = retrieve(&graph, "real comparison Great", 1, 4000);
    assert!(!result.snippets.is_empty());
    assert!(
        result.snippets[0].source_label.ends_with("RealType.Great"),
        "top snippet was {}",
        result.snippets[0].source_label
    );

    // The oracle agrees that the Great component scores highest among
    // component nodes.
    let scores = oracle_scores(&graph, "real comparison Great");
    let best_component = graph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Component)
        .max_by(|a, b| {
            scores[a.id as usize]
                .1
                .partial_cmp(&scores[b.id as usize].1)
                .unwrap()
                .then(b.id.cmp(&a.id))
        })
        .unwrap();
    assert!(best_component.label.ends_with("RealType.Great"));
    assert_eq!(
        result.snippets[0].score,
        scores[best_component.id as usize].1
    );
}

#[test]
fn retrieval_no_overlap_is_empty() {
    let graph = great_fixture_graph();
    let result = retrieve(&graph, "zzzz", 1, 4000);
    assert!(result.snippets.is_empty());
    assert_eq!(result.total_chars, 0);
}

#[test]
fn retrieval_budget_respected_and_prefix_stable() {
    let graph = great_fixture_graph();
    let full = retrieve(&graph, "real comparison Great sine cosine", 2, 100_000);
    assert!(full.total_chars <= 100_000);
    let mut previous: Option<Vec<String>> = None;
    for budget in [1usize, 10, 50, 100, 200, 400, 800, 1600, 3200, 100_000] {
        let result = retrieve(&graph, "real comparison Great sine cosine", 2, budget);
        assert!(result.total_chars <= budget, "budget {budget} exceeded");
        let labels: Vec<String> =
            result.snippets.iter().map(|s| s.source_label.clone()).collect();
        if let Some(prev) = &previous {
            assert!(
                labels.starts_with(prev.as_slice()),
                "packing not prefix-stable at budget {budget}: {prev:?} vs {labels:?}"
            );
        }
        previous = Some(labels);
    }
}

#[test]
fn hops_zero_limits_to_seeds() {
    let graph = great_fixture_graph();
    // With zero hops only seed nodes themselves can contribute snippets.
    let zero = retrieve(&graph, "great", 0, 100_000);
    let one = retrieve(&graph, "great", 1, 100_000);
    assert!(zero.snippets.len() <= one.snippets.len());
    for snippet in &zero.snippets {
        let node = graph.nodes.iter().find(|n| n.label == snippet.source_label).unwrap();
        let scores = oracle_scores(&graph, "great");
        assert!(scores[node.id as usize].1 > 0.0, "zero-hop snippet must be a seed");
    }
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let graph = great_fixture_graph();
    let path = dir.path().join("graph.json");
    save_graph(&graph, &path).unwrap();
    let loaded = load_graph(&path).unwrap();
    assert_eq!(loaded, graph);
}

#[test]
fn load_truncated_file_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let graph = great_fixture_graph();
    let path = dir.path().join("graph.json");
    save_graph(&graph, &path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_graph(&path), Err(GraphError::Format(_))));
}

#[test]
fn load_wrong_version_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.json");
    fs::write(&path, "{\"format_version\":999,\"nodes\":[],\"edges\":[]}").unwrap();
    let err = load_graph(&path).unwrap_err();
    assert!(matches!(err, GraphError::Format(msg) if msg.contains("999")));
}
