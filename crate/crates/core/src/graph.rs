//! Property graph over parsed Modelica components and its retrieval index.
//!
//! Nodes are components, connectors, equations, parameters, and interfaces;
//! edges are extension, connection, invocation, and instantiation relations.
//! Retrieval scores nodes lexically, expands seed neighborhoods, and packs
//! component snippets greedily under a character budget.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusRecord;
use crate::frontend::{parse_unit, Component, ComponentKind, TokenKind};

pub const FORMAT_VERSION: u32 = 1;
/// Number of seed nodes a retrieval starts from.
pub const SEED_COUNT: usize = 5;
pub const DEFAULT_HOPS: usize = 1;
pub const DEFAULT_CHAR_BUDGET: usize = 4000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot access {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid graph file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Component,
    Connector,
    Equation,
    Parameter,
    Interface,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Extension,
    Connection,
    Invocation,
    Instantiation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: u64,
    pub kind: NodeKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl GraphNode {
    pub fn is_stub(&self) -> bool {
        self.attributes.get("stub").is_some_and(|v| v == "true")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: u64,
    pub dst: u64,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    /// Qualified name → node id for every Component-kind node.
    pub component_index: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub score: f64,
    pub source_label: String,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub snippets: Vec<Snippet>,
    pub total_chars: usize,
}

struct Builder {
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    component_index: BTreeMap<String, u64>,
    /// (kind, label) → id for stub nodes, so references dedupe.
    stubs: HashMap<(NodeKind, String), u64>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            nodes: Vec::new(),
            edges: Vec::new(),
            component_index: BTreeMap::new(),
            stubs: HashMap::new(),
        }
    }

    fn add_node(&mut self, kind: NodeKind, label: String) -> u64 {
        let id = self.nodes.len() as u64;
        self.nodes.push(GraphNode { id, kind, label, attributes: BTreeMap::new() });
        id
    }

    fn attr(&mut self, id: u64, key: &str, value: &str) {
        if !value.is_empty() {
            self.nodes[id as usize].attributes.insert(key.to_string(), value.to_string());
        }
    }

    fn stub(&mut self, kind: NodeKind, label: &str) -> u64 {
        if let Some(&id) = self.stubs.get(&(kind, label.to_string())) {
            return id;
        }
        let id = self.add_node(kind, label.to_string());
        self.attr(id, "stub", "true");
        self.stubs.insert((kind, label.to_string()), id);
        if kind == NodeKind::Component {
            self.component_index.insert(label.to_string(), id);
        }
        id
    }

    fn edge(&mut self, src: u64, dst: u64, kind: EdgeKind) {
        self.edges.push(GraphEdge { src, dst, kind });
    }
}

/// Resolve a (possibly scope-relative) class path against the component
/// index: exact, then relative to the referencing component's prefix, then
/// by unique-ish suffix.
fn resolve_path(index: &BTreeMap<String, u64>, scope_prefix: &str, path: &str) -> Option<u64> {
    if let Some(&id) = index.get(path) {
        return Some(id);
    }
    if !scope_prefix.is_empty() {
        if let Some(&id) = index.get(&format!("{scope_prefix}.{path}")) {
            return Some(id);
        }
    }
    let suffix = format!(".{path}");
    index.iter().find(|(name, _)| name.ends_with(&suffix)).map(|(_, &id)| id)
}

/// Identifier paths (`a`, `a.b.c`) appearing in an equation text. Keywords
/// such as `der` or `when` never start a path.
fn identifier_paths(text: &str) -> Vec<String> {
    let tokens = match crate::frontend::tokenize(text) {
        Ok(t) => t,
        Err(_) => return Vec::new(),
    };
    let mut paths = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i].kind != TokenKind::Identifier {
            i += 1;
            continue;
        }
        let mut path = tokens[i].text.clone();
        i += 1;
        while i + 1 < tokens.len()
            && tokens[i].kind == TokenKind::Punctuation
            && tokens[i].text == "."
            && tokens[i + 1].kind == TokenKind::Identifier
        {
            path.push('.');
            path.push_str(&tokens[i + 1].text);
            i += 2;
        }
        paths.push(path);
    }
    paths
}

/// Build the property graph for `components`, enriching component nodes from
/// matching corpus records (by qualified name). Unknown references become
/// stub nodes flagged `stub=true`.
pub fn build_graph(components: &[Component], corpus: &[CorpusRecord]) -> PropertyGraph {
    let mut records: BTreeMap<String, &CorpusRecord> = BTreeMap::new();
    for record in corpus {
        records.insert(record.qualified_name(), record);
    }
    let find_record = |qualified: &str| -> Option<&CorpusRecord> {
        if let Some(r) = records.get(qualified) {
            return Some(*r);
        }
        let suffix = format!(".{qualified}");
        records.iter().find(|(name, _)| name.ends_with(&suffix)).map(|(_, r)| *r)
    };

    let mut b = Builder::new();

    // Pass 1: one Component node per component, so references resolve
    // regardless of declaration order.
    let mut component_ids = Vec::with_capacity(components.len());
    for component in components {
        let id = b.add_node(NodeKind::Component, component.qualified_name.clone());
        b.component_index.insert(component.qualified_name.clone(), id);
        component_ids.push(id);

        let record = find_record(&component.qualified_name);
        let description = record
            .map(|r| r.description.clone())
            .filter(|d| !d.is_empty())
            .unwrap_or_else(|| component.description.clone());
        let documentation = record
            .map(|r| r.documentation.clone())
            .filter(|d| !d.is_empty())
            .unwrap_or_else(|| component.documentation.clone());
        let source = record
            .map(|r| r.model.clone())
            .filter(|m| !m.is_empty())
            .unwrap_or_else(|| component.cleaned_source.clone());
        b.attr(id, "kind", &format!("{:?}", component.kind));
        b.attr(id, "description", &description);
        b.attr(id, "documentation", &documentation);
        b.attr(id, "source", &source);
        if let Some(library) = component.qualified_name.split('.').next() {
            if library != component.qualified_name {
                b.attr(id, "library", library);
            }
        }
    }

    let kind_by_name: HashMap<&str, ComponentKind> =
        components.iter().map(|c| (c.qualified_name.as_str(), c.kind)).collect();
    let kind_of_node = |graph_nodes: &[GraphNode], id: u64| -> Option<ComponentKind> {
        graph_nodes.get(id as usize).and_then(|n| kind_by_name.get(n.label.as_str()).copied())
    };

    // Pass 2: members, equations, and edges.
    for (component, &comp_id) in components.iter().zip(&component_ids) {
        let qual = &component.qualified_name;
        let prefix = component.qualified_prefix().to_string();
        let mut members: HashMap<&str, u64> = HashMap::new();

        for param in component.constants.iter().chain(&component.parameters) {
            let id = b.add_node(NodeKind::Parameter, format!("{qual}.{}", param.name));
            b.attr(id, "type_name", &param.type_name);
            b.attr(id, "description", &param.description);
            if let Some(default) = &param.default {
                b.attr(id, "default", default);
            }
            members.insert(param.name.as_str(), id);
        }
        for variable in &component.variables {
            let id = b.add_node(NodeKind::Interface, format!("{qual}.{}", variable.name));
            b.attr(id, "type_name", &variable.type_name);
            b.attr(id, "description", &variable.description);
            members.insert(variable.name.as_str(), id);
        }

        // Connector-typed declarations become Connector nodes; every other
        // instantiation becomes an Instantiation edge to a real or stub
        // Component node.
        for inst in &component.instantiations {
            let resolved = resolve_path(&b.component_index, &prefix, &inst.type_path);
            let target_kind = resolved.and_then(|id| kind_of_node(&b.nodes, id));
            if target_kind == Some(ComponentKind::Connector) {
                let id = b.add_node(NodeKind::Connector, format!("{qual}.{}", inst.instance_name));
                b.attr(id, "type_name", &inst.type_path);
                members.insert(inst.instance_name.as_str(), id);
            } else {
                let target =
                    resolved.unwrap_or_else(|| b.stub(NodeKind::Component, &inst.type_path));
                b.edge(comp_id, target, EdgeKind::Instantiation);
            }
        }

        for extends in &component.extends_clauses {
            let target = resolve_path(&b.component_index, &prefix, extends)
                .unwrap_or_else(|| b.stub(NodeKind::Component, extends));
            if target != comp_id {
                b.edge(comp_id, target, EdgeKind::Extension);
            }
        }

        // Connect endpoints resolve to declared members or to per-component
        // stub interfaces (external references such as `sine.y`).
        let mut endpoint_stubs: HashMap<String, u64> = HashMap::new();
        let mut endpoint_node = |b: &mut Builder, endpoint: &str, members: &HashMap<&str, u64>| {
            if let Some(&id) = members.get(endpoint) {
                return id;
            }
            if let Some(&id) = endpoint_stubs.get(endpoint) {
                return id;
            }
            let id = b.stub(NodeKind::Interface, &format!("{qual}.{endpoint}"));
            endpoint_stubs.insert(endpoint.to_string(), id);
            id
        };
        for connect in &component.connects {
            let lhs = endpoint_node(&mut b, &connect.lhs, &members);
            let rhs = endpoint_node(&mut b, &connect.rhs, &members);
            b.edge(lhs, rhs, EdgeKind::Connection);
        }

        for (i, equation) in component.equations.iter().enumerate() {
            let eq_id = b.add_node(NodeKind::Equation, format!("{qual}.eq{}", i + 1));
            let kind = match equation {
                crate::frontend::Equation::Simple { .. } => "simple",
                crate::frontend::Equation::Derivative { .. } => "derivative",
                crate::frontend::Equation::When { .. } => "when",
            };
            b.attr(eq_id, "kind", kind);
            b.attr(eq_id, "text", equation.text());
            b.edge(comp_id, eq_id, EdgeKind::Invocation);

            let mut seen = HashSet::new();
            for path in identifier_paths(equation.text()) {
                let target = members
                    .get(path.as_str())
                    .copied()
                    .or_else(|| endpoint_stubs.get(&path).copied());
                if let Some(target) = target {
                    if seen.insert(target) {
                        b.edge(eq_id, target, EdgeKind::Invocation);
                    }
                }
            }
        }
    }

    PropertyGraph { nodes: b.nodes, edges: b.edges, component_index: b.component_index }
}

/// Parse corpus records into components and build the graph over them.
/// Records whose model no longer parses are skipped with a warning.
pub fn build_graph_from_records(records: &[CorpusRecord]) -> PropertyGraph {
    let mut components = Vec::new();
    let mut kept_records = Vec::new();
    for record in records {
        match parse_unit(&record.model) {
            Ok(parsed) => {
                let source = &record.source;
                for mut component in parsed {
                    if !source.is_empty() {
                        component.qualified_name = format!("{source}.{}", component.qualified_name);
                    }
                    components.push(component);
                }
                kept_records.push(record.clone());
            }
            Err(e) => log::warn!("skipping corpus record {}: {e}", record.qualified_name()),
        }
    }
    build_graph(&components, &kept_records)
}

fn score_tokens(text: &str, out: &mut HashMap<String, f64>, weight: f64) {
    for term in text.to_lowercase().split(|c: char| !c.is_alphanumeric()) {
        if !term.is_empty() {
            *out.entry(term.to_string()).or_insert(0.0) += weight;
        }
    }
}

/// Lexical score of one node: term-frequency overlap with label tokens
/// weighted twice attribute tokens.
fn node_score(node: &GraphNode, terms: &[String]) -> f64 {
    let mut tf: HashMap<String, f64> = HashMap::new();
    score_tokens(&node.label, &mut tf, 2.0);
    for value in node.attributes.values() {
        score_tokens(value, &mut tf, 1.0);
    }
    terms.iter().map(|t| tf.get(t).copied().unwrap_or(0.0)).sum()
}

/// Retrieve component snippets for `query`: score all nodes, expand the top
/// seeds by `hops`, and greedily pack reached components' text by descending
/// score until `char_budget`. Packing is prefix-stable: raising the budget
/// never drops a previously returned snippet.
pub fn retrieve(
    graph: &PropertyGraph,
    query: &str,
    hops: usize,
    char_budget: usize,
) -> RetrievalResult {
    let terms: Vec<String> = query
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect();
    if terms.is_empty() || graph.nodes.is_empty() {
        return RetrievalResult::default();
    }

    let scores: Vec<f64> = graph.nodes.iter().map(|n| node_score(n, &terms)).collect();
    let mut seeds: Vec<u64> = graph
        .nodes
        .iter()
        .filter(|n| scores[n.id as usize] > 0.0)
        .map(|n| n.id)
        .collect();
    seeds.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    seeds.truncate(SEED_COUNT);
    if seeds.is_empty() {
        return RetrievalResult::default();
    }

    // Undirected adjacency for neighborhood expansion.
    let mut adjacency: HashMap<u64, Vec<u64>> = HashMap::new();
    for edge in &graph.edges {
        adjacency.entry(edge.src).or_default().push(edge.dst);
        adjacency.entry(edge.dst).or_default().push(edge.src);
    }
    let mut reached: HashSet<u64> = HashSet::new();
    for &seed in &seeds {
        let mut queue = VecDeque::from([(seed, 0usize)]);
        let mut visited = HashSet::from([seed]);
        reached.insert(seed);
        while let Some((node, depth)) = queue.pop_front() {
            if depth >= hops {
                continue;
            }
            for &next in adjacency.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
                if visited.insert(next) {
                    reached.insert(next);
                    queue.push_back((next, depth + 1));
                }
            }
        }
    }

    let mut candidates: Vec<&GraphNode> = reached
        .iter()
        .map(|&id| &graph.nodes[id as usize])
        .filter(|n| n.kind == NodeKind::Component)
        .collect();
    candidates.sort_by(|a, b| {
        scores[b.id as usize]
            .partial_cmp(&scores[a.id as usize])
            .unwrap()
            .then(a.id.cmp(&b.id))
    });

    let mut result = RetrievalResult::default();
    for node in candidates {
        let mut parts = Vec::new();
        for key in ["description", "documentation", "source"] {
            if let Some(value) = node.attributes.get(key) {
                parts.push(value.as_str());
            }
        }
        if parts.is_empty() {
            continue;
        }
        let text = parts.join("\n");
        let len = text.chars().count();
        if result.total_chars + len > char_budget {
            break;
        }
        result.total_chars += len;
        result.snippets.push(Snippet {
            score: scores[node.id as usize],
            source_label: node.label.clone(),
            text,
        });
    }
    result
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format_version: u32,
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
}

pub fn save_graph(graph: &PropertyGraph, path: &Path) -> Result<(), GraphError> {
    let file = GraphFile {
        format_version: FORMAT_VERSION,
        nodes: graph.nodes.clone(),
        edges: graph.edges.clone(),
    };
    let json = serde_json::to_vec_pretty(&file)
        .map_err(|e| GraphError::Format(e.to_string()))?;
    crate::jsonl::write_atomic(path, &json)
        .map_err(|e| GraphError::Io { path: path.to_path_buf(), message: e.to_string() })
}

pub fn load_graph(path: &Path) -> Result<PropertyGraph, GraphError> {
    let bytes = std::fs::read(path)
        .map_err(|e| GraphError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let file: GraphFile = serde_json::from_slice(&bytes)
        .map_err(|e| GraphError::Format(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(GraphError::Format(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let node_count = file.nodes.len() as u64;
    for (i, node) in file.nodes.iter().enumerate() {
        if node.id != i as u64 {
            return Err(GraphError::Format(format!("node id {} out of sequence", node.id)));
        }
        if node.label.is_empty() {
            return Err(GraphError::Format(format!("node {} has an empty label", node.id)));
        }
    }
    for edge in &file.edges {
        if edge.src >= node_count || edge.dst >= node_count {
            return Err(GraphError::Format(format!(
                "edge {} -> {} references a missing node",
                edge.src, edge.dst
            )));
        }
    }
    let component_index = file
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Component)
        .map(|n| (n.label.clone(), n.id))
        .collect();
    Ok(PropertyGraph { nodes: file.nodes, edges: file.edges, component_index })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_component_list_builds_empty_graph() {
        let graph = build_graph(&[], &[]);
        assert!(graph.nodes.is_empty());
        assert!(graph.edges.is_empty());
        assert!(graph.component_index.is_empty());
    }

    #[test]
    fn identifier_paths_skip_keywords() {
        let paths = identifier_paths("when height<=redius then reinit(velocity,-c*pre(velocity)); end when");
        assert!(paths.contains(&"height".to_string()));
        assert!(paths.contains(&"velocity".to_string()));
        assert!(paths.contains(&"c".to_string()));
        assert!(!paths.contains(&"when".to_string()));
        assert!(paths.contains(&"redius".to_string()));
    }

    #[test]
    fn dotted_paths_extracted() {
        let paths = identifier_paths("y=great.y");
        assert_eq!(paths, vec!["y".to_string(), "great.y".to_string()]);
    }
}
