//! Scripted backend for hermetic tests: per-model stage outcomes come from a
//! JSON fixture instead of a compiler.
//!
//! Fixture shape:
//! ```json
//! {
//!   "defaults": { "load": "ok", "check": "ok", "simulate": "ok" },
//!   "libraries": { "Modelica": "ok" },
//!   "models": {
//!     "Bad": { "load": { "errors": [ { "message": "missing semicolon at 3:14",
//!                                      "line": 3, "column": 14 } ] } },
//!     "Good": { "simulate": { "trajectories": [ { "variable": "y",
//!                                                 "times": [0.0, 1.0],
//!                                                 "values": [1.0, 1.0] } ] } }
//!   }
//! }
//! ```
//! A stage value is "ok", "unavailable", `{ "errors": [...] }`, or (for
//! simulate) `{ "trajectories": [...] }`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use super::{
    BackendError, BackendSession, Diagnostic, Severity, SimSettings, Trajectory, ValidationStage,
};
use crate::frontend::first_class_name;

#[derive(Debug, Error)]
#[error("invalid mock fixture: {0}")]
pub struct FixtureError(String);

#[derive(Debug, Clone, Deserialize)]
struct DiagnosticSpec {
    message: String,
    #[serde(default)]
    line: Option<u32>,
    #[serde(default)]
    column: Option<u32>,
    #[serde(default)]
    warning: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum StageSpec {
    Word(String),
    Errors { errors: Vec<DiagnosticSpec> },
    Trajectories { trajectories: Vec<Trajectory> },
}

impl Default for StageSpec {
    fn default() -> Self {
        StageSpec::Word("ok".to_string())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
struct Defaults {
    load: StageSpec,
    check: StageSpec,
    simulate: StageSpec,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
struct ModelSpec {
    load: Option<StageSpec>,
    check: Option<StageSpec>,
    simulate: Option<StageSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
struct Fixture {
    defaults: Defaults,
    libraries: BTreeMap<String, StageSpec>,
    models: BTreeMap<String, ModelSpec>,
}

pub struct MockSession {
    fixture: Arc<Fixture>,
    /// Name of the last model whose load failed.
    failed_load: Option<String>,
}

/// Build a session from a fixture file.
pub fn mock_backend(script: &Path) -> Result<MockSession, FixtureError> {
    let content = std::fs::read_to_string(script)
        .map_err(|e| FixtureError(format!("{}: {e}", script.display())))?;
    mock_backend_from_str(&content)
}

/// Build a session from fixture JSON text.
pub fn mock_backend_from_str(json: &str) -> Result<MockSession, FixtureError> {
    let fixture: Fixture = serde_json::from_str(json).map_err(|e| FixtureError(e.to_string()))?;
    // Basic shape validation up front so bad fixtures fail loudly.
    for (name, spec) in &fixture.libraries {
        validate_stage(name, spec, false)?;
    }
    for (name, model) in &fixture.models {
        for spec in [&model.load, &model.check].into_iter().flatten() {
            validate_stage(name, spec, false)?;
        }
        if let Some(spec) = &model.simulate {
            validate_stage(name, spec, true)?;
        }
    }
    Ok(MockSession { fixture: Arc::new(fixture), failed_load: None })
}

fn validate_stage(name: &str, spec: &StageSpec, simulate: bool) -> Result<(), FixtureError> {
    match spec {
        StageSpec::Word(word) if word == "ok" || word == "unavailable" => Ok(()),
        StageSpec::Word(word) => {
            Err(FixtureError(format!("{name}: unknown stage word '{word}'")))
        }
        StageSpec::Errors { errors } if errors.is_empty() => {
            Err(FixtureError(format!("{name}: empty error list")))
        }
        StageSpec::Errors { .. } => Ok(()),
        StageSpec::Trajectories { trajectories } => {
            if !simulate {
                return Err(FixtureError(format!(
                    "{name}: trajectories only make sense for simulate"
                )));
            }
            for t in trajectories {
                t.validate().map_err(FixtureError)?;
            }
            Ok(())
        }
    }
}

fn apply(
    spec: &StageSpec,
    stage: ValidationStage,
) -> Result<Option<Vec<Trajectory>>, BackendError> {
    match spec {
        StageSpec::Word(word) if word == "ok" => Ok(None),
        StageSpec::Word(_) => Err(BackendError::Unavailable("scripted session loss".into())),
        StageSpec::Errors { errors } => {
            let diagnostics = errors
                .iter()
                .map(|e| Diagnostic {
                    severity: if e.warning { Severity::Warning } else { Severity::Error },
                    stage,
                    message: e.message.clone(),
                    line: e.line,
                    column: e.column,
                })
                .collect();
            Err(BackendError::Diagnostics(diagnostics))
        }
        StageSpec::Trajectories { trajectories } => Ok(Some(trajectories.clone())),
    }
}

impl MockSession {
    /// A model listed in the fixture answers "ok" for unspecified stages;
    /// unmatched names fall back to the scripted defaults entirely.
    fn model_stage(&self, model: &str, stage: ValidationStage) -> StageSpec {
        match self.fixture.models.get(model) {
            Some(spec) => match stage {
                ValidationStage::Load => spec.load.clone(),
                ValidationStage::Check => spec.check.clone(),
                ValidationStage::Simulate => spec.simulate.clone(),
                ValidationStage::Functional => None,
            }
            .unwrap_or_default(),
            None => match stage {
                ValidationStage::Load => self.fixture.defaults.load.clone(),
                ValidationStage::Check => self.fixture.defaults.check.clone(),
                _ => self.fixture.defaults.simulate.clone(),
            },
        }
    }
}

impl BackendSession for MockSession {
    fn load_code(&mut self, code: &str) -> Result<(), BackendError> {
        let name = first_class_name(code).unwrap_or_default();
        let spec = self.model_stage(&name, ValidationStage::Load);
        match apply(&spec, ValidationStage::Load) {
            Ok(_) => {
                self.failed_load = None;
                Ok(())
            }
            Err(e) => {
                self.failed_load = Some(name);
                Err(e)
            }
        }
    }

    fn load_library(&mut self, name: &str) -> Result<(), BackendError> {
        match self.fixture.libraries.get(name) {
            Some(spec) => apply(spec, ValidationStage::Load).map(|_| ()),
            None => Ok(()),
        }
    }

    fn check(&mut self, model_name: &str) -> Result<(), BackendError> {
        if self.failed_load.as_deref() == Some(model_name) {
            return Err(BackendError::single(
                ValidationStage::Check,
                format!("model '{model_name}' failed to load"),
            ));
        }
        apply(&self.model_stage(model_name, ValidationStage::Check), ValidationStage::Check)
            .map(|_| ())
    }

    fn simulate(
        &mut self,
        model_name: &str,
        _settings: &SimSettings,
    ) -> Result<Vec<Trajectory>, BackendError> {
        if self.failed_load.as_deref() == Some(model_name) {
            return Err(BackendError::single(
                ValidationStage::Simulate,
                format!("model '{model_name}' failed to load"),
            ));
        }
        apply(&self.model_stage(model_name, ValidationStage::Simulate), ValidationStage::Simulate)
            .map(|t| t.unwrap_or_default())
    }

    fn dispose(&mut self) {}
}
