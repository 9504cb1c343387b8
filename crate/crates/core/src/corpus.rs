//! Turns raw Modelica libraries into `Dataset_all` and `Dataset_sft` record
//! streams: scan, extract, clean, filter, deduplicate, and emit JSONL.

use std::collections::HashSet;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{self, first_class_name, parse_unit, squash_ws};
use crate::jsonl;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("record {name} does not re-parse as exactly one component: {detail}")]
    InvalidRecord { name: String, detail: String },
}

/// One `.mo` file read from a library tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceUnit {
    pub path: PathBuf,
    pub library_name: String,
    pub modelica_version: String,
    pub content: String,
}

/// A `Dataset_all` record. Field order and names match the serialized
/// format exactly: {"modelica version", "description", "documentation",
/// "model", "source"}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(rename = "modelica version")]
    pub modelica_version: String,
    pub description: String,
    pub documentation: String,
    pub model: String,
    pub source: String,
}

impl CorpusRecord {
    /// Dot path of the component: source prefix plus the defined class name.
    pub fn qualified_name(&self) -> String {
        match first_class_name(&self.model) {
            Some(name) if !self.source.is_empty() => format!("{}.{}", self.source, name),
            Some(name) => name,
            None if !self.source.is_empty() => self.source.clone(),
            None => String::new(),
        }
    }
}

/// A `Dataset_sft` record: {"instruction", "query", "response"}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub instruction: String,
    pub query: String,
    pub response: String,
}

/// Cleaning policy applied by [`filter_records`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub max_model_chars: usize,
    pub require_description: bool,
    pub require_documentation: bool,
    pub excluded_name_markers: Vec<String>,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            max_model_chars: 20_000,
            require_description: true,
            require_documentation: true,
            // Both the conventional and the MSL spelling: a plain substring
            // match on "UserGuide" would miss MSL's "UsersGuide" packages.
            excluded_name_markers: vec![
                "UserGuide".to_string(),
                "UsersGuide".to_string(),
                "Icon".to_string(),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    MissingDescription,
    MissingDocumentation,
    OversizeModel,
    NonModeling,
    Duplicate,
    ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub name: String,
    pub reason: RejectReason,
}

/// Audit log of everything dropped along the way.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionLog {
    pub entries: Vec<Rejection>,
}

impl RejectionLog {
    pub fn push(&mut self, name: impl Into<String>, reason: RejectReason) {
        self.entries.push(Rejection { name: name.into(), reason });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn merge(&mut self, other: RejectionLog) {
        self.entries.extend(other.entries);
    }
}

/// Outcome of scanning a library tree: units in lexicographic path order and
/// the per-file errors that did not stop the scan.
#[derive(Debug)]
pub struct ScanOutcome {
    pub units: Vec<SourceUnit>,
    pub errors: Vec<(PathBuf, String)>,
}

/// Recursively collect every `.mo` file under `root` in lexicographic path
/// order. Unreadable files are recorded, not fatal.
pub fn scan_library(
    root: &Path,
    library_name: &str,
    version: &str,
) -> Result<ScanOutcome, CorpusError> {
    if !root.exists() {
        return Err(CorpusError::Io {
            path: root.to_path_buf(),
            message: "library root does not exist".into(),
        });
    }
    let mut paths = Vec::new();
    let mut errors = Vec::new();
    for entry in walkdir::WalkDir::new(root) {
        match entry {
            Ok(e) => {
                if e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "mo") {
                    paths.push(e.into_path());
                }
            }
            Err(e) => {
                let path = e.path().map(Path::to_path_buf).unwrap_or_else(|| root.to_path_buf());
                errors.push((path, e.to_string()));
            }
        }
    }
    paths.sort();
    let mut units = Vec::new();
    for path in paths {
        match std::fs::read_to_string(&path) {
            Ok(content) => units.push(SourceUnit {
                path,
                library_name: library_name.to_string(),
                modelica_version: version.to_string(),
                content,
            }),
            Err(e) => errors.push((path, e.to_string())),
        }
    }
    Ok(ScanOutcome { units, errors })
}

/// Prefix a parsed qualified name with the library name unless it already
/// starts with it (files using `within <LibraryName>...` clauses).
fn library_qualified(library_name: &str, qualified: &str) -> String {
    if library_name.is_empty()
        || qualified == library_name
        || qualified.starts_with(&format!("{library_name}."))
    {
        qualified.to_string()
    } else {
        format!("{library_name}.{qualified}")
    }
}

/// Parse every unit and build one record per leaf component (definitions
/// containing nested classes act as containers; their children become the
/// records). Parse failures are logged as `ParseFailure`, never fatal.
pub fn build_records(units: &[SourceUnit]) -> (Vec<CorpusRecord>, RejectionLog) {
    let mut records = Vec::new();
    let mut log = RejectionLog::default();
    for unit in units {
        let components = match parse_unit(&unit.content) {
            Ok(c) => c,
            Err(e) => {
                log.push(unit.path.display().to_string(), RejectReason::ParseFailure);
                log::warn!("parse failure in {}: {e}", unit.path.display());
                continue;
            }
        };
        let names: Vec<&str> = components.iter().map(|c| c.qualified_name.as_str()).collect();
        for component in &components {
            let prefix = format!("{}.", component.qualified_name);
            let is_container = names.iter().any(|n| n.starts_with(&prefix));
            if is_container {
                continue;
            }
            let qualified = library_qualified(&unit.library_name, &component.qualified_name);
            let source = match qualified.rfind('.') {
                Some(idx) => qualified[..idx].to_string(),
                None => String::new(),
            };
            records.push(CorpusRecord {
                modelica_version: unit.modelica_version.clone(),
                description: component.description.clone(),
                documentation: component.documentation.clone(),
                model: component.cleaned_source.clone(),
                source,
            });
        }
    }
    (records, log)
}

/// Apply the cleaning policy: description/documentation requirements, size
/// threshold, and non-modeling name markers. Keeps input order.
pub fn filter_records(
    records: Vec<CorpusRecord>,
    policy: &FilterPolicy,
) -> (Vec<CorpusRecord>, RejectionLog) {
    let mut kept = Vec::new();
    let mut log = RejectionLog::default();
    for record in records {
        let name = record.qualified_name();
        if let Some(marker) =
            policy.excluded_name_markers.iter().find(|m| !m.is_empty() && name.contains(m.as_str()))
        {
            log::debug!("excluding {name}: marker {marker}");
            log.push(name, RejectReason::NonModeling);
            continue;
        }
        let missing_desc = policy.require_description && record.description.is_empty();
        let missing_doc = policy.require_documentation && record.documentation.is_empty();
        let rejected_for_docs = match (policy.require_description, policy.require_documentation) {
            (true, true) => missing_desc && missing_doc,
            _ => missing_desc || missing_doc,
        };
        if rejected_for_docs {
            let reason = if missing_desc {
                RejectReason::MissingDescription
            } else {
                RejectReason::MissingDocumentation
            };
            log.push(name, reason);
            continue;
        }
        if record.model.chars().count() > policy.max_model_chars {
            log.push(name, RejectReason::OversizeModel);
            continue;
        }
        kept.push(record);
    }
    (kept, log)
}

/// Drop duplicates keyed on whitespace-normalized model text; the first
/// occurrence wins.
pub fn dedupe(records: Vec<CorpusRecord>) -> (Vec<CorpusRecord>, RejectionLog) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut log = RejectionLog::default();
    for record in records {
        let key = squash_ws(&record.model);
        if seen.insert(key) {
            kept.push(record);
        } else {
            log.push(record.qualified_name(), RejectReason::Duplicate);
        }
    }
    (kept, log)
}

/// Write `Dataset_all` records as JSONL, validating that every model field
/// still re-parses as exactly one component. Returns lines written.
pub fn emit_jsonl(records: &[CorpusRecord], out: &Path) -> Result<usize, CorpusError> {
    for record in records {
        let name = record.qualified_name();
        if record.model.is_empty() {
            return Err(CorpusError::InvalidRecord { name, detail: "empty model".into() });
        }
        match frontend::parse_unit(&record.model) {
            Ok(components) if components.len() == 1 => {}
            Ok(components) => {
                return Err(CorpusError::InvalidRecord {
                    name,
                    detail: format!("parses into {} components", components.len()),
                })
            }
            Err(e) => return Err(CorpusError::InvalidRecord { name, detail: e.to_string() }),
        }
    }
    jsonl::write_jsonl_atomic(records, out).map_err(|e| io_error(out, e))
}

/// Write SFT records as JSONL. Returns lines written.
pub fn emit_sft_jsonl(records: &[SftRecord], out: &Path) -> Result<usize, CorpusError> {
    jsonl::write_jsonl_atomic(records, out).map_err(|e| io_error(out, e))
}

/// Write the rejection log as JSONL of {"name", "reason"}.
pub fn emit_reject_log(log: &RejectionLog, out: &Path) -> Result<usize, CorpusError> {
    jsonl::write_jsonl_atomic(&log.entries, out).map_err(|e| io_error(out, e))
}

fn io_error(path: &Path, e: io::Error) -> CorpusError {
    CorpusError::Io { path: path.to_path_buf(), message: e.to_string() }
}

const PLACEHOLDERS: &[&str] = &["description", "documentation", "source", "model"];

/// Substitute `{placeholder}` patterns; unknown placeholder names are errors.
fn substitute(template: &str, record: &CorpusRecord) -> Result<String, CorpusError> {
    let mut out = String::with_capacity(template.len());
    let mut chars = template.char_indices().peekable();
    while let Some((idx, c)) = chars.next() {
        if c != '{' {
            out.push(c);
            continue;
        }
        let rest = &template[idx + 1..];
        let end = rest.find('}');
        match end {
            Some(end)
                if rest[..end].chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                    && rest[..end].chars().all(|c| c.is_ascii_alphanumeric() || c == '_') =>
            {
                let name = &rest[..end];
                if !PLACEHOLDERS.contains(&name) {
                    return Err(CorpusError::UnknownPlaceholder(name.to_string()));
                }
                out.push_str(match name {
                    "description" => &record.description,
                    "documentation" => &record.documentation,
                    "source" => &record.source,
                    "model" => &record.model,
                    _ => unreachable!(),
                });
                for _ in 0..=end {
                    chars.next();
                }
            }
            _ => out.push(c),
        }
    }
    Ok(out)
}

/// Pair each record with substituted instruction/query templates to form the
/// instruction-supervised dataset; the response is the record's model text.
pub fn build_sft_records(
    records: &[CorpusRecord],
    instruction_template: &str,
    query_template: &str,
) -> Result<Vec<SftRecord>, CorpusError> {
    records
        .iter()
        .map(|record| {
            Ok(SftRecord {
                instruction: substitute(instruction_template, record)?,
                query: substitute(query_template, record)?,
                response: record.model.clone(),
            })
        })
        .collect()
}
