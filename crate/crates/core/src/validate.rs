//! Four-stage candidate validation: load, check, simulate, functional.
//! Produces per-candidate reports with pass_s/pass_f verdicts and the
//! diagnostics the feedback loop feeds back to the model.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::genclient::{BenchTask, Candidate};
use crate::simbackend::{
    parse_trajectory_csv, BackendError, BackendSession, Diagnostic, Trajectory,
    ValidationStage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageStatus {
    Pass,
    Fail,
    Skipped,
    NotRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: ValidationStage,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
    pub elapsed: f64,
}

impl StageOutcome {
    fn not_run(stage: ValidationStage) -> Self {
        StageOutcome { stage, status: StageStatus::NotRun, diagnostics: Vec::new(), elapsed: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub task_id: String,
    pub sample_index: usize,
    pub round: usize,
    /// Exactly four outcomes: Load, Check, Simulate, Functional.
    pub stages: Vec<StageOutcome>,
    pub pass_s: bool,
    pub pass_f: bool,
}

impl ValidationReport {
    pub fn stage(&self, stage: ValidationStage) -> &StageOutcome {
        self.stages.iter().find(|s| s.stage == stage).expect("all four stages present")
    }

    pub fn failed(&self) -> bool {
        self.stages.iter().any(|s| s.status == StageStatus::Fail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComparedVariables {
    Intersection,
    Named(Vec<String>),
}

impl Default for ComparedVariables {
    fn default() -> Self {
        ComparedVariables::Intersection
    }
}

/// How a candidate's trajectories are compared against the reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalSpec {
    pub reference: Vec<Trajectory>,
    #[serde(default)]
    pub compared_variables: ComparedVariables,
    /// Fraction of the overlap window dropped as transient.
    pub transient_skip_fraction: f64,
    pub grid_points: usize,
    pub nmse_threshold: f64,
    pub variance_floor: f64,
}

impl FunctionalSpec {
    pub fn new(reference: Vec<Trajectory>) -> Self {
        FunctionalSpec {
            reference,
            compared_variables: ComparedVariables::Intersection,
            transient_skip_fraction: 0.1,
            grid_points: 500,
            nmse_threshold: 1e-3,
            variance_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableComparison {
    pub mse: f64,
    pub nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub pass: bool,
    pub variables: BTreeMap<String, VariableComparison>,
    pub diagnostics: Vec<Diagnostic>,
}

fn interpolate(trajectory: &Trajectory, t: f64) -> f64 {
    let times = &trajectory.times;
    let values = &trajectory.values;
    if t <= times[0] {
        return values[0];
    }
    if t >= *times.last().unwrap() {
        return *values.last().unwrap();
    }
    let idx = times.partition_point(|&x| x <= t);
    let (t0, t1) = (times[idx - 1], times[idx]);
    let (v0, v1) = (values[idx - 1], values[idx]);
    v0 + (v1 - v0) * ((t - t0) / (t1 - t0))
}

/// Compare candidate trajectories against the reference: per variable,
/// resample both over the transient-trimmed overlap window onto a uniform
/// grid, take the mean squared error, and normalize by the reference's
/// variance. Passes when every compared variable's NMSE is at or below the
/// threshold.
pub fn compare_trajectories(candidate: &[Trajectory], spec: &FunctionalSpec) -> ComparisonOutcome {
    let functional = ValidationStage::Functional;
    let mut outcome =
        ComparisonOutcome { pass: false, variables: BTreeMap::new(), diagnostics: Vec::new() };

    fn by_name<'t>(set: &'t [Trajectory], name: &str) -> Option<&'t Trajectory> {
        set.iter().find(|t| t.variable == name)
    }

    let names: Vec<String> = match &spec.compared_variables {
        ComparedVariables::Named(names) => names.clone(),
        ComparedVariables::Intersection => {
            let mut names: Vec<String> = spec
                .reference
                .iter()
                .filter(|r| r.variable != "time")
                .filter(|r| candidate.iter().any(|c| c.variable == r.variable))
                .map(|r| r.variable.clone())
                .collect();
            names.sort();
            names
        }
    };
    if names.is_empty() {
        outcome.diagnostics.push(Diagnostic::error(
            functional,
            "no common variables between candidate and reference outputs",
        ));
        return outcome;
    }

    let mut all_pass = true;
    for name in names {
        let reference = match by_name(&spec.reference, &name) {
            Some(t) => t,
            None => {
                outcome
                    .diagnostics
                    .push(Diagnostic::error(functional, format!("missing variable '{name}' in reference")));
                all_pass = false;
                continue;
            }
        };
        let cand = match by_name(candidate, &name) {
            Some(t) => t,
            None => {
                outcome.diagnostics.push(Diagnostic::error(
                    functional,
                    format!("missing variable '{name}' in candidate outputs"),
                ));
                all_pass = false;
                continue;
            }
        };

        let window_start = reference.times[0].max(cand.times[0]);
        let window_end = reference.times.last().unwrap().min(*cand.times.last().unwrap());
        if window_end <= window_start {
            outcome.diagnostics.push(Diagnostic::error(
                functional,
                format!("empty time overlap for '{name}'"),
            ));
            all_pass = false;
            continue;
        }
        let start = window_start + spec.transient_skip_fraction * (window_end - window_start);

        let n = spec.grid_points.max(2);
        let mut sum_sq = 0.0;
        let mut ref_samples = Vec::with_capacity(n);
        for j in 0..n {
            let t = start + (window_end - start) * j as f64 / (n - 1) as f64;
            let r = interpolate(reference, t);
            let c = interpolate(cand, t);
            sum_sq += (c - r) * (c - r);
            ref_samples.push(r);
        }
        let mse = sum_sq / n as f64;
        let mean = ref_samples.iter().sum::<f64>() / n as f64;
        let variance =
            ref_samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let nmse = mse / variance.max(spec.variance_floor);
        outcome.variables.insert(name.clone(), VariableComparison { mse, nmse });
        if !(nmse <= spec.nmse_threshold) {
            all_pass = false;
            outcome.diagnostics.push(Diagnostic::error(
                functional,
                format!(
                    "'{name}': NMSE {nmse:.6e} exceeds threshold {:.6e}",
                    spec.nmse_threshold
                ),
            ));
        }
    }
    outcome.pass = all_pass;
    outcome
}

/// Run one candidate through the four-stage pipeline.
pub fn run_pipeline(
    candidate: &Candidate,
    task: &BenchTask,
    session: &mut dyn BackendSession,
    spec: Option<&FunctionalSpec>,
) -> ValidationReport {
    run_pipeline_flag(candidate, task, session, spec).0
}

/// As [`run_pipeline`], also reporting whether the session died mid-run
/// (so a batch runner can replace it and retry).
pub fn run_pipeline_flag(
    candidate: &Candidate,
    task: &BenchTask,
    session: &mut dyn BackendSession,
    spec: Option<&FunctionalSpec>,
) -> (ValidationReport, bool) {
    use ValidationStage::{Check, Functional, Load, Simulate};

    let mut stages = vec![
        StageOutcome::not_run(Load),
        StageOutcome::not_run(Check),
        StageOutcome::not_run(Simulate),
        StageOutcome::not_run(Functional),
    ];
    let mut session_dead = false;
    let mut trajectories: Option<Vec<Trajectory>> = None;
    let settings = task.sim_settings.clone().unwrap_or_default();

    'pipeline: {
        // Load: dependency libraries first, then the candidate code.
        let started = Instant::now();
        let mut load_result = Ok(());
        for library in &task.dependencies {
            load_result = session.load_library(library);
            if load_result.is_err() {
                break;
            }
        }
        if load_result.is_ok() {
            load_result = session.load_code(&candidate.code);
        }
        if !apply_result(&mut stages[0], load_result, started, &mut session_dead) {
            break 'pipeline;
        }

        // Check the first defined model.
        let model_name =
            crate::frontend::first_class_name(&candidate.code).unwrap_or_default();
        let started = Instant::now();
        let check_result = session.check(&model_name);
        if !apply_result(&mut stages[1], check_result, started, &mut session_dead) {
            break 'pipeline;
        }

        // Simulate, unless the task is exempt. An exempt task with a
        // use-case wrapper has the wrapper simulated instead.
        let started = Instant::now();
        if task.simulation_exempt {
            match &task.use_case_model {
                None => {
                    stages[2].status = StageStatus::Skipped;
                    stages[2].elapsed = started.elapsed().as_secs_f64();
                }
                Some(wrapper) => {
                    let wrapper_name =
                        crate::frontend::first_class_name(wrapper).unwrap_or_default();
                    let result = session
                        .load_code(wrapper)
                        .and_then(|_| session.simulate(&wrapper_name, &settings));
                    match result {
                        Ok(t) => {
                            trajectories = Some(t);
                            stages[2].status = StageStatus::Pass;
                            stages[2].elapsed = started.elapsed().as_secs_f64();
                        }
                        Err(e) => {
                            if !apply_result(&mut stages[2], Err::<(), _>(e), started, &mut session_dead)
                            {
                                break 'pipeline;
                            }
                        }
                    }
                }
            }
        } else {
            match session.simulate(&model_name, &settings) {
                Ok(t) => {
                    trajectories = Some(t);
                    stages[2].status = StageStatus::Pass;
                    stages[2].elapsed = started.elapsed().as_secs_f64();
                }
                Err(e) => {
                    if !apply_result(&mut stages[2], Err::<(), _>(e), started, &mut session_dead) {
                        break 'pipeline;
                    }
                }
            }
        }

        // Functional comparison when a reference spec exists and the
        // simulation produced outputs.
        let started = Instant::now();
        match (spec, &trajectories) {
            (Some(spec), Some(outputs)) => {
                let comparison = compare_trajectories(outputs, spec);
                stages[3].status =
                    if comparison.pass { StageStatus::Pass } else { StageStatus::Fail };
                stages[3].diagnostics = comparison.diagnostics;
                stages[3].elapsed = started.elapsed().as_secs_f64();
            }
            _ => {
                stages[3].status = StageStatus::Skipped;
                stages[3].elapsed = started.elapsed().as_secs_f64();
            }
        }
    }

    let pass_s = stages[0].status == StageStatus::Pass
        && stages[1].status == StageStatus::Pass
        && matches!(stages[2].status, StageStatus::Pass | StageStatus::Skipped);
    let pass_f =
        pass_s && matches!(stages[3].status, StageStatus::Pass | StageStatus::Skipped);

    (
        ValidationReport {
            task_id: candidate.task_id.clone(),
            sample_index: candidate.sample_index,
            round: candidate.round,
            stages,
            pass_s,
            pass_f,
        },
        session_dead,
    )
}

/// Record a backend call result on its stage outcome. Returns false when the
/// pipeline must short-circuit.
fn apply_result<T>(
    outcome: &mut StageOutcome,
    result: Result<T, BackendError>,
    started: Instant,
    session_dead: &mut bool,
) -> bool {
    outcome.elapsed = started.elapsed().as_secs_f64();
    match result {
        Ok(_) => {
            outcome.status = StageStatus::Pass;
            true
        }
        Err(BackendError::Diagnostics(diagnostics)) => {
            outcome.status = StageStatus::Fail;
            outcome.diagnostics = diagnostics;
            false
        }
        Err(BackendError::Unavailable(message)) => {
            outcome.status = StageStatus::NotRun;
            outcome.diagnostics = vec![Diagnostic::error(
                outcome.stage,
                format!("backend unavailable: {message}"),
            )];
            *session_dead = true;
            false
        }
    }
}

/// Report for a candidate whose task id resolves to nothing.
pub fn unknown_task_report(candidate: &Candidate) -> ValidationReport {
    use ValidationStage::{Check, Functional, Load, Simulate};
    let mut stages = vec![
        StageOutcome::not_run(Load),
        StageOutcome::not_run(Check),
        StageOutcome::not_run(Simulate),
        StageOutcome::not_run(Functional),
    ];
    stages[0].diagnostics =
        vec![Diagnostic::error(Load, format!("unknown task '{}'", candidate.task_id))];
    ValidationReport {
        task_id: candidate.task_id.clone(),
        sample_index: candidate.sample_index,
        round: candidate.round,
        stages,
        pass_s: false,
        pass_f: false,
    }
}

pub type BackendFactory<'a> = dyn Fn() -> Result<Box<dyn BackendSession>, String> + Sync + 'a;

/// Validate candidates over a pool of backend sessions (one per worker).
/// Reports come back in candidate order; a session that dies is replaced and
/// its candidate retried once.
pub fn validate_batch(
    candidates: &[Candidate],
    tasks: &HashMap<String, BenchTask>,
    backend_factory: &BackendFactory,
    specs: &HashMap<String, FunctionalSpec>,
    workers: usize,
) -> Vec<ValidationReport> {
    let slots: Vec<Mutex<Option<ValidationReport>>> =
        candidates.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, candidates.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut session = backend_factory().ok();
                loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= candidates.len() {
                        break;
                    }
                    let candidate = &candidates[index];
                    let report = match tasks.get(&candidate.task_id) {
                        None => unknown_task_report(candidate),
                        Some(task) => {
                            let spec = specs.get(&candidate.task_id);
                            let mut attempt = 0;
                            loop {
                                let live = match session.as_mut() {
                                    Some(live) => live,
                                    None => match backend_factory() {
                                        Ok(fresh) => {
                                            session = Some(fresh);
                                            session.as_mut().unwrap()
                                        }
                                        Err(e) => {
                                            let mut report = unknown_task_report(candidate);
                                            report.stages[0].diagnostics = vec![Diagnostic::error(
                                                ValidationStage::Load,
                                                format!("cannot create backend session: {e}"),
                                            )];
                                            break report;
                                        }
                                    },
                                };
                                let (report, dead) =
                                    run_pipeline_flag(candidate, task, live.as_mut(), spec);
                                if dead {
                                    session = None;
                                    if attempt == 0 {
                                        attempt = 1;
                                        continue;
                                    }
                                }
                                break report;
                            }
                        }
                    };
                    *slots[index].lock().unwrap() = Some(report);
                }
                if let Some(mut live) = session.take() {
                    live.dispose();
                }
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every candidate produced a report"))
        .collect()
}

/// Build functional specs for the tasks that define a reference: an explicit
/// trajectory CSV, a `<task_id>.csv` in `refs_dir`, or a reference model
/// simulated on a fresh backend session.
pub fn resolve_specs(
    tasks: &[BenchTask],
    backend_factory: &BackendFactory,
    refs_dir: Option<&Path>,
    template: &FunctionalSpec,
) -> (HashMap<String, FunctionalSpec>, Vec<(String, String)>) {
    let mut specs = HashMap::new();
    let mut errors = Vec::new();
    for task in tasks {
        let mut push_spec = |reference: Vec<Trajectory>| {
            let mut spec = template.clone();
            spec.reference = reference;
            specs.insert(task.id.clone(), spec);
        };
        if let Some(path) = &task.reference_trajectories {
            match std::fs::read_to_string(path).map_err(|e| e.to_string()).and_then(|c| {
                parse_trajectory_csv(&c)
            }) {
                Ok(reference) => push_spec(reference),
                Err(e) => errors.push((task.id.clone(), format!("{}: {e}", path.display()))),
            }
            continue;
        }
        if let Some(dir) = refs_dir {
            let path = dir.join(format!("{}.csv", task.id));
            if path.exists() {
                match std::fs::read_to_string(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|c| parse_trajectory_csv(&c))
                {
                    Ok(reference) => push_spec(reference),
                    Err(e) => errors.push((task.id.clone(), format!("{}: {e}", path.display()))),
                }
                continue;
            }
        }
        if let Some(model) = &task.reference_model {
            let settings = task.sim_settings.clone().unwrap_or_default();
            let name = crate::frontend::first_class_name(model).unwrap_or_default();
            let result = backend_factory().map_err(|e| e.to_string()).and_then(|mut session| {
                let outcome = session
                    .load_code(model)
                    .and_then(|_| session.simulate(&name, &settings))
                    .map_err(|e| match e {
                        BackendError::Diagnostics(d) => {
                            d.first().map(|d| d.message.clone()).unwrap_or_default()
                        }
                        BackendError::Unavailable(m) => m,
                    });
                session.dispose();
                outcome
            });
            match result {
                Ok(reference) => push_spec(reference),
                Err(e) => errors.push((task.id.clone(), format!("reference model: {e}"))),
            }
        }
    }
    (specs, errors)
}
