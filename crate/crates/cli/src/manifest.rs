//! Run manifest: enough provenance to re-run any invocation byte-for-byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    /// Flags as invoked (--flag=value pairs from argv).
    pub flags: BTreeMap<String, String>,
    /// SHA-256 per existing input file referenced by a flag value.
    pub input_digests: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub exit_code: i32,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Parse argv into flag pairs: `--flag value` and `--flag=value`; bare flags
/// map to "true".
fn flags_from_argv(argv: &[String]) -> BTreeMap<String, String> {
    let mut flags = BTreeMap::new();
    let mut iter = argv.iter().peekable();
    while let Some(arg) = iter.next() {
        let Some(name) = arg.strip_prefix("--") else { continue };
        if let Some((name, value)) = name.split_once('=') {
            flags.insert(name.to_string(), value.to_string());
        } else if iter.peek().is_some_and(|next| !next.starts_with("--")) {
            flags.insert(name.to_string(), iter.next().unwrap().clone());
        } else {
            flags.insert(name.to_string(), "true".to_string());
        }
    }
    flags
}

fn digest_file(path: &Path) -> Option<String> {
    let bytes = std::fs::read(path).ok()?;
    Some(hex::encode(Sha256::digest(&bytes)))
}

pub struct ManifestRecorder {
    manifest_out: Option<PathBuf>,
    subcommand: String,
    flags: BTreeMap<String, String>,
    started: u64,
}

impl ManifestRecorder {
    pub fn new(manifest_out: Option<PathBuf>, argv: &[String]) -> Self {
        let subcommand = argv
            .iter()
            .skip(1)
            .take_while(|a| !a.starts_with('-'))
            .cloned()
            .collect::<Vec<_>>()
            .join(" ");
        ManifestRecorder {
            manifest_out,
            subcommand,
            flags: flags_from_argv(argv),
            started: unix_now(),
        }
    }

    /// Write the manifest (when requested), digesting every flag value that
    /// names an existing file. Failure to write is reported, never fatal.
    pub fn finish(&self, exit_code: i32) {
        let Some(out) = &self.manifest_out else { return };
        let mut input_digests = BTreeMap::new();
        for value in self.flags.values() {
            let path = Path::new(value);
            if path.is_file() {
                if let Some(digest) = digest_file(path) {
                    input_digests.insert(value.clone(), digest);
                }
            }
        }
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: self.subcommand.clone(),
            flags: self.flags.clone(),
            input_digests,
            started_unix: self.started,
            finished_unix: unix_now(),
            exit_code,
        };
        match serde_json::to_vec_pretty(&manifest) {
            Ok(bytes) => {
                if let Err(e) = modigen_core::jsonl::write_atomic(out, &bytes) {
                    eprintln!("warning: cannot write manifest {}: {e}", out.display());
                }
            }
            Err(e) => eprintln!("warning: cannot serialize manifest: {e}"),
        }
    }
}
