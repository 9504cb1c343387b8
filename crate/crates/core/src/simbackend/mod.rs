//! Uniform contract for loading, checking, and simulating Modelica code,
//! with three implementations: an adapter driving an external compiler's
//! scripting interface, a scripted mock for tests, and a built-in
//! micro-simulator for flat ODE models.

mod expr;
mod micro;
mod mock;
mod omc;

pub use micro::{micro_backend, micro_simulate, MicroSession};
pub use mock::{mock_backend, mock_backend_from_str, FixtureError, MockSession};
pub use omc::{omc_adapter, omc_adapter_with_timeout, OmcError, OmcSession};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// Pipeline stage a diagnostic or outcome belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValidationStage {
    Load,
    Check,
    Simulate,
    Functional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub stage: ValidationStage,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<u32>,
}

impl Diagnostic {
    pub fn error(stage: ValidationStage, message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, stage, message: message.into(), line: None, column: None }
    }

    pub fn error_at(
        stage: ValidationStage,
        message: impl Into<String>,
        line: u32,
        column: u32,
    ) -> Self {
        Diagnostic {
            severity: Severity::Error,
            stage,
            message: message.into(),
            line: Some(line),
            column: Some(column),
        }
    }
}

/// One simulated variable: strictly increasing times and matching values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub variable: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Trajectory {
    /// Enforces the type invariant: |times| = |values| >= 2, strictly
    /// increasing times.
    pub fn validate(&self) -> Result<(), String> {
        if self.times.len() != self.values.len() {
            return Err(format!("{}: times/values length mismatch", self.variable));
        }
        if self.times.len() < 2 {
            return Err(format!("{}: needs at least 2 samples", self.variable));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(format!("{}: times not strictly increasing", self.variable));
        }
        Ok(())
    }
}

/// Which variables a simulation should emit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputVars {
    All,
    Named(Vec<String>),
}

impl Default for OutputVars {
    fn default() -> Self {
        OutputVars::All
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub stop_time: f64,
    /// Fixed step of the micro backend.
    pub step: f64,
    /// Integration tolerance passed to the external backend.
    pub tolerance: f64,
    pub output_variables: OutputVars,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings { stop_time: 1.0, step: 1e-3, tolerance: 1e-6, output_variables: OutputVars::All }
    }
}

/// Failure of a backend request: either the model is at fault (diagnostics)
/// or the session itself died and cannot answer.
#[derive(Debug, Clone)]
pub enum BackendError {
    Diagnostics(Vec<Diagnostic>),
    Unavailable(String),
}

impl BackendError {
    pub fn single(stage: ValidationStage, message: impl Into<String>) -> Self {
        BackendError::Diagnostics(vec![Diagnostic::error(stage, message)])
    }
}

/// A live backend session. After a failed `load_code`, `check` and
/// `simulate` on that model report an error rather than crashing.
pub trait BackendSession: Send {
    fn load_code(&mut self, code: &str) -> Result<(), BackendError>;
    fn load_library(&mut self, name: &str) -> Result<(), BackendError>;
    fn check(&mut self, model_name: &str) -> Result<(), BackendError>;
    fn simulate(
        &mut self,
        model_name: &str,
        settings: &SimSettings,
    ) -> Result<Vec<Trajectory>, BackendError>;
    fn dispose(&mut self);
}

/// Parse a result CSV ("time" first column, header row present) into one
/// trajectory per non-time column.
pub fn parse_trajectory_csv(content: &str) -> Result<Vec<Trajectory>, String> {
    let mut lines = content.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty CSV")?;
    let columns: Vec<String> = header
        .split(',')
        .map(|c| c.trim().trim_matches('"').to_string())
        .collect();
    if columns.first().map(String::as_str) != Some("time") {
        return Err(format!("first CSV column must be \"time\", got {:?}", columns.first()));
    }
    let mut times = Vec::new();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); columns.len() - 1];
    for (row_idx, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(format!("row {} has {} cells, expected {}", row_idx + 2, cells.len(), columns.len()));
        }
        let parse = |s: &str| -> Result<f64, String> {
            s.trim_matches('"').parse::<f64>().map_err(|e| format!("row {}: {e}", row_idx + 2))
        };
        times.push(parse(cells[0])?);
        for (i, cell) in cells[1..].iter().enumerate() {
            series[i].push(parse(cell)?);
        }
    }
    let trajectories: Vec<Trajectory> = columns[1..]
        .iter()
        .zip(series)
        .map(|(name, values)| Trajectory { variable: name.clone(), times: times.clone(), values })
        .collect();
    for t in &trajectories {
        t.validate()?;
    }
    Ok(trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_invariants() {
        let good = Trajectory { variable: "x".into(), times: vec![0.0, 1.0], values: vec![1.0, 2.0] };
        assert!(good.validate().is_ok());
        let short = Trajectory { variable: "x".into(), times: vec![0.0], values: vec![1.0] };
        assert!(short.validate().is_err());
        let decreasing =
            Trajectory { variable: "x".into(), times: vec![0.0, 0.0], values: vec![1.0, 2.0] };
        assert!(decreasing.validate().is_err());
    }

    #[test]
    fn csv_parse_quoted_headers() {
        let csv = "\"time\",\"height\",\"velocity\"\n0,1,0\n0.5,0.9,-4.9\n1,0.6,-9.8\n";
        let trajectories = parse_trajectory_csv(csv).unwrap();
        assert_eq!(trajectories.len(), 2);
        assert_eq!(trajectories[0].variable, "height");
        assert_eq!(trajectories[0].times, vec![0.0, 0.5, 1.0]);
        assert_eq!(trajectories[1].values, vec![0.0, -4.9, -9.8]);
    }

    #[test]
    fn csv_requires_time_first() {
        assert!(parse_trajectory_csv("x,time\n0,0\n1,1\n").is_err());
    }
}
