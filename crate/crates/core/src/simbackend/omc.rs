//! Adapter driving an external Modelica compiler's interactive scripting
//! interface over stdin/stdout. Each request is one scripting command plus a
//! sentinel string expression; the echoed sentinel delimits the response.
//! Used with OpenModelica's `omc`, and testable against any process that
//! speaks the same scripting grammar.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::{
    BackendError, BackendSession, Diagnostic, Severity, SimSettings, Trajectory, ValidationStage,
};
use crate::frontend::first_class_name;

pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum OmcError {
    #[error("cannot spawn {path}: {message}")]
    Spawn { path: PathBuf, message: String },
    #[error("compiler unresponsive after {0} seconds")]
    ProtocolTimeout(u64),
}

pub struct OmcSession {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    workdir: PathBuf,
    request_timeout: Duration,
    counter: usize,
    dead: bool,
    failed_load: Option<String>,
}

/// Spawn an interactive compiler session in `workdir`.
pub fn omc_adapter(executable: &Path, workdir: &Path) -> Result<OmcSession, OmcError> {
    omc_adapter_with_timeout(executable, workdir, DEFAULT_REQUEST_TIMEOUT)
}

pub fn omc_adapter_with_timeout(
    executable: &Path,
    workdir: &Path,
    request_timeout: Duration,
) -> Result<OmcSession, OmcError> {
    let spawn_err = |message: String| OmcError::Spawn { path: executable.to_path_buf(), message };
    std::fs::create_dir_all(workdir).map_err(|e| spawn_err(e.to_string()))?;
    let mut child = Command::new(executable)
        .arg("--interactive=stdin")
        .current_dir(workdir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| spawn_err(e.to_string()))?;
    let stdin = child.stdin.take().ok_or_else(|| spawn_err("no stdin pipe".into()))?;
    let stdout = child.stdout.take().ok_or_else(|| spawn_err("no stdout pipe".into()))?;

    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let reader = BufReader::new(stdout);
        for line in reader.lines() {
            match line {
                Ok(line) => {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
    });

    Ok(OmcSession {
        child,
        stdin,
        lines: rx,
        workdir: workdir.to_path_buf(),
        request_timeout,
        counter: 0,
        dead: false,
        failed_load: None,
    })
}

impl OmcSession {
    /// Send one scripting command and collect output until the echoed
    /// sentinel. A timeout marks the whole session dead.
    fn request(&mut self, command: &str) -> Result<String, BackendError> {
        if self.dead {
            return Err(BackendError::Unavailable("compiler session is dead".into()));
        }
        self.counter += 1;
        let sentinel = format!("MODIGEN-EOT-{}", self.counter);
        let payload = format!("{command}\n\"{sentinel}\"\n");
        if let Err(e) = self.stdin.write_all(payload.as_bytes()).and_then(|_| self.stdin.flush()) {
            self.dead = true;
            return Err(BackendError::Unavailable(format!("cannot write to compiler: {e}")));
        }
        let mut response = String::new();
        let deadline = Instant::now() + self.request_timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(remaining) {
                Ok(line) if line.contains(&sentinel) => return Ok(response),
                Ok(line) => {
                    response.push_str(&line);
                    response.push('\n');
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.dead = true;
                    return Err(BackendError::Unavailable(
                        OmcError::ProtocolTimeout(self.request_timeout.as_secs()).to_string(),
                    ));
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.dead = true;
                    return Err(BackendError::Unavailable("compiler closed its output".into()));
                }
            }
        }
    }

    fn error_string(&mut self) -> String {
        self.request("getErrorString()").unwrap_or_default()
    }

    fn fail(&mut self, stage: ValidationStage, context: &str) -> BackendError {
        let errors = self.error_string();
        let mut diagnostics = parse_compiler_diagnostics(&errors, stage);
        if !diagnostics.iter().any(|d| d.severity == Severity::Error) {
            diagnostics.push(Diagnostic::error(stage, context.to_string()));
        }
        BackendError::Diagnostics(diagnostics)
    }
}

/// True when a scripting response denotes success (`true`, or a check
/// summary).
fn is_true_response(response: &str) -> bool {
    response.lines().any(|l| l.trim() == "true" || l.trim() == "\"true\"")
}

/// Best-effort parse of compiler error output. Lines look like
/// `[file.mo:3:14-3:20:writable] Error: missing token ';'` or
/// `Error: class X not found`.
fn parse_compiler_diagnostics(text: &str, stage: ValidationStage) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for raw_line in text.lines() {
        let line = raw_line.trim().trim_matches('"');
        if line.is_empty() {
            continue;
        }
        let severity = if line.contains("Error") {
            Severity::Error
        } else if line.contains("Warning") {
            Severity::Warning
        } else {
            continue;
        };
        let (mut src_line, mut src_column) = (None, None);
        let mut message = line.to_string();
        if let Some(rest) = line.strip_prefix('[') {
            if let Some(end) = rest.find(']') {
                let location = &rest[..end];
                let parts: Vec<&str> = location.split(':').collect();
                if parts.len() >= 3 {
                    src_line = parts[1].parse::<u32>().ok();
                    src_column = parts[2].split('-').next().and_then(|c| c.parse::<u32>().ok());
                }
                message = rest[end + 1..].trim().to_string();
            }
        }
        if let Some(stripped) = message.strip_prefix("Error:") {
            message = stripped.trim().to_string();
        } else if let Some(stripped) = message.strip_prefix("Warning:") {
            message = stripped.trim().to_string();
        }
        out.push(Diagnostic { severity, stage, message, line: src_line, column: src_column });
    }
    out
}

/// Pull `resultFile = "<path>"` out of a simulate() response.
fn parse_result_file(response: &str) -> Option<PathBuf> {
    let idx = response.find("resultFile")?;
    let rest = &response[idx..];
    let first_quote = rest.find('"')?;
    let rest = &rest[first_quote + 1..];
    let second_quote = rest.find('"')?;
    let path = &rest[..second_quote];
    if path.is_empty() {
        None
    } else {
        Some(PathBuf::from(path))
    }
}

impl BackendSession for OmcSession {
    fn load_code(&mut self, code: &str) -> Result<(), BackendError> {
        self.counter += 1;
        let file = self.workdir.join(format!("candidate_{}.mo", self.counter));
        std::fs::write(&file, code).map_err(|e| {
            BackendError::Unavailable(format!("cannot stage {}: {e}", file.display()))
        })?;
        let name = first_class_name(code).unwrap_or_default();
        let response = self.request(&format!("loadFile(\"{}\")", file.display()))?;
        if is_true_response(&response) {
            self.failed_load = None;
            Ok(())
        } else {
            self.failed_load = Some(name);
            Err(self.fail(ValidationStage::Load, "loadFile returned false"))
        }
    }

    fn load_library(&mut self, name: &str) -> Result<(), BackendError> {
        let response = self.request(&format!("loadModel({name})"))?;
        if is_true_response(&response) {
            Ok(())
        } else {
            Err(self.fail(ValidationStage::Load, &format!("loadModel({name}) returned false")))
        }
    }

    fn check(&mut self, model_name: &str) -> Result<(), BackendError> {
        if self.failed_load.as_deref() == Some(model_name) {
            return Err(BackendError::single(
                ValidationStage::Check,
                format!("model '{model_name}' failed to load"),
            ));
        }
        let response = self.request(&format!("checkModel({model_name})"))?;
        if response.contains("completed successfully") {
            Ok(())
        } else {
            Err(self.fail(ValidationStage::Check, &format!("checkModel({model_name}) failed")))
        }
    }

    fn simulate(
        &mut self,
        model_name: &str,
        settings: &SimSettings,
    ) -> Result<Vec<Trajectory>, BackendError> {
        if self.failed_load.as_deref() == Some(model_name) {
            return Err(BackendError::single(
                ValidationStage::Simulate,
                format!("model '{model_name}' failed to load"),
            ));
        }
        let command = format!(
            "simulate({model_name}, stopTime={}, tolerance={}, outputFormat=\"csv\")",
            settings.stop_time, settings.tolerance
        );
        let response = self.request(&command)?;
        let result_file = match parse_result_file(&response) {
            Some(path) if path.is_absolute() => path,
            Some(path) => self.workdir.join(path),
            None => {
                return Err(self.fail(ValidationStage::Simulate, "simulation produced no result file"))
            }
        };
        let content = std::fs::read_to_string(&result_file).map_err(|e| {
            BackendError::single(
                ValidationStage::Simulate,
                format!("cannot read result {}: {e}", result_file.display()),
            )
        })?;
        let mut trajectories = super::parse_trajectory_csv(&content)
            .map_err(|e| BackendError::single(ValidationStage::Simulate, e))?;
        if let super::OutputVars::Named(names) = &settings.output_variables {
            trajectories.retain(|t| names.contains(&t.variable));
        }
        Ok(trajectories)
    }

    fn dispose(&mut self) {
        let _ = self.stdin.write_all(b"quit()\n");
        let _ = self.stdin.flush();
        std::thread::sleep(Duration::from_millis(50));
        let _ = self.child.kill();
        let _ = self.child.wait();
        self.dead = true;
    }
}

impl Drop for OmcSession {
    fn drop(&mut self) {
        if !self.dead {
            self.dispose();
        }
    }
}
