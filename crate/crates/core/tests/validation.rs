//! Functional comparison oracles and four-stage pipeline behavior.

use std::collections::HashMap;

use modigen_core::genclient::{BenchTask, Candidate, TaskKind};
use modigen_core::simbackend::{
    micro_backend, mock_backend_from_str, BackendSession, Trajectory, ValidationStage,
};
use modigen_core::validate::{
    compare_trajectories, run_pipeline, validate_batch, ComparedVariables, FunctionalSpec,
    StageStatus, ValidationReport,
};

fn trajectory(name: &str, times: Vec<f64>, values: Vec<f64>) -> Trajectory {
    Trajectory { variable: name.into(), times, values }
}

fn sampled(name: &str, n: usize, f: impl Fn(f64) -> f64) -> Trajectory {
    let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let values = times.iter().map(|&t| f(t)).collect();
    trajectory(name, times, values)
}

#[test]
fn identical_trajectories_have_zero_nmse() {
    let reference = vec![sampled("y", 100, |t| (2.0 * std::f64::consts::PI * t).sin())];
    let spec = FunctionalSpec::new(reference.clone());
    let outcome = compare_trajectories(&reference, &spec);
    assert!(outcome.pass);
    assert_eq!(outcome.variables["y"].nmse, 0.0);
    assert_eq!(outcome.variables["y"].mse, 0.0);
}

#[test]
fn constant_offset_mse_is_offset_squared() {
    // Analytic oracle: adding 0.1 everywhere makes MSE exactly 0.01; with
    // var(sin) about 0.5 the NMSE lands near 0.02 and fails the 1e-3 gate.
    let sin = |t: f64| (2.0 * std::f64::consts::PI * t).sin();
    let reference = vec![sampled("y", 1000, sin)];
    let candidate = vec![sampled("y", 1000, |t| sin(t) + 0.1)];
    let spec = FunctionalSpec::new(reference);
    let outcome = compare_trajectories(&candidate, &spec);
    let comparison = outcome.variables["y"];
    assert!((comparison.mse - 0.01).abs() < 1e-9, "mse {}", comparison.mse);
    assert!((comparison.nmse - 0.02).abs() < 5e-3, "nmse {}", comparison.nmse);
    assert!(!outcome.pass);
}

#[test]
fn nmse_is_scale_invariant() {
    let sin = |t: f64| (2.0 * std::f64::consts::PI * t).sin();
    let base_nmse = {
        let spec = FunctionalSpec::new(vec![sampled("y", 500, sin)]);
        let candidate = vec![sampled("y", 500, |t| sin(t) + 0.05)];
        compare_trajectories(&candidate, &spec).variables["y"].nmse
    };
    for alpha in [1e-3, 1.0, 1e3] {
        let spec = FunctionalSpec::new(vec![sampled("y", 500, |t| alpha * sin(t))]);
        let candidate = vec![sampled("y", 500, |t| alpha * (sin(t) + 0.05))];
        let nmse = compare_trajectories(&candidate, &spec).variables["y"].nmse;
        assert!(
            (nmse - base_nmse).abs() <= 1e-9 * base_nmse.max(1.0),
            "alpha {alpha}: {nmse} vs {base_nmse}"
        );
    }
}

#[test]
fn affine_signals_resample_exactly() {
    // Linear interpolation is exact for affine trajectories, regardless of
    // the sampling grids.
    let reference = vec![trajectory("y", vec![0.0, 0.25, 1.0], vec![1.0, 1.5, 3.0])];
    let candidate = vec![trajectory("y", vec![0.0, 0.6, 1.0], vec![1.0, 2.2, 3.0])];
    let spec = FunctionalSpec::new(reference);
    let outcome = compare_trajectories(&candidate, &spec);
    assert!(outcome.pass);
    assert!(outcome.variables["y"].nmse < 1e-24);
}

#[test]
fn missing_variable_fails() {
    let spec = FunctionalSpec {
        compared_variables: ComparedVariables::Named(vec!["y".into()]),
        ..FunctionalSpec::new(vec![sampled("y", 10, |t| t)])
    };
    let candidate = vec![sampled("z", 10, |t| t)];
    let outcome = compare_trajectories(&candidate, &spec);
    assert!(!outcome.pass);
    assert!(outcome.diagnostics[0].message.contains("missing variable 'y'"));
}

#[test]
fn empty_overlap_fails() {
    let reference = vec![trajectory("y", vec![0.0, 1.0], vec![0.0, 1.0])];
    let candidate = vec![trajectory("y", vec![5.0, 6.0], vec![0.0, 1.0])];
    let spec = FunctionalSpec::new(reference);
    let outcome = compare_trajectories(&candidate, &spec);
    assert!(!outcome.pass);
    assert!(outcome.diagnostics[0].message.contains("empty time overlap"));
}

fn bench_task(id: &str) -> BenchTask {
    BenchTask {
        id: id.into(),
        kind: TaskKind::Component,
        prompt: "p".into(),
        dependencies: Vec::new(),
        reference_model: None,
        reference_trajectories: None,
        simulation_exempt: false,
        use_case_model: None,
        sim_settings: None,
    }
}

fn candidate(task_id: &str, code: &str) -> Candidate {
    Candidate {
        task_id: task_id.into(),
        sample_index: 0,
        code: code.into(),
        raw_response: code.into(),
        round: 0,
    }
}

fn assert_statuses(report: &ValidationReport, expected: [StageStatus; 4]) {
    let actual: Vec<StageStatus> = report.stages.iter().map(|s| s.status).collect();
    assert_eq!(actual, expected.to_vec(), "{report:?}");
}

#[test]
fn broken_candidate_short_circuits() {
    let mut session = micro_backend();
    let report = run_pipeline(
        &candidate("t", "model Bad Real x = end Bad;"),
        &bench_task("t"),
        &mut session,
        None,
    );
    assert_statuses(
        &report,
        [StageStatus::Fail, StageStatus::NotRun, StageStatus::NotRun, StageStatus::NotRun],
    );
    assert!(!report.pass_s && !report.pass_f);
    let load = report.stage(ValidationStage::Load);
    assert!(load.diagnostics[0].line.is_some());
}

#[test]
fn valid_flat_model_passes_with_functional_skipped() {
    let mut session = micro_backend();
    let report = run_pipeline(
        &candidate("t", "model Ok Real x(start=0); equation der(x) = 1; end Ok;"),
        &bench_task("t"),
        &mut session,
        None,
    );
    assert_statuses(
        &report,
        [StageStatus::Pass, StageStatus::Pass, StageStatus::Pass, StageStatus::Skipped],
    );
    assert!(report.pass_s && report.pass_f);
}

#[test]
fn exempt_task_skips_simulation() {
    let mut session = micro_backend();
    let mut task = bench_task("t");
    task.simulation_exempt = true;
    let report = run_pipeline(
        &candidate("t", "partial model Base Real x; end Base;"),
        &task,
        &mut session,
        None,
    );
    assert_statuses(
        &report,
        [StageStatus::Pass, StageStatus::Pass, StageStatus::Skipped, StageStatus::Skipped],
    );
    assert!(report.pass_s && report.pass_f);
}

#[test]
fn exempt_task_with_wrapper_simulates_wrapper() {
    let mut session = micro_backend();
    let mut task = bench_task("t");
    task.simulation_exempt = true;
    task.use_case_model =
        Some("model UseCase Real x(start=0); equation der(x) = 2; end UseCase;".into());
    let report = run_pipeline(
        &candidate("t", "function f input Real u; output Real y; algorithm y := u; end f;"),
        &task,
        &mut session,
        None,
    );
    assert_statuses(
        &report,
        [StageStatus::Pass, StageStatus::Pass, StageStatus::Pass, StageStatus::Skipped],
    );
}

#[test]
fn functional_failure_detected_on_micro_backend() {
    let mut session = micro_backend();
    // Reference: der(x) = 1; candidate: der(x) = 2. Same variable names.
    let reference_code = "model R Real x(start=0); equation der(x) = 1; end R;";
    let mut ref_session = micro_backend();
    ref_session.load_code(reference_code).unwrap();
    let reference = ref_session.simulate("R", &Default::default()).unwrap();

    let spec = FunctionalSpec::new(reference);
    let report = run_pipeline(
        &candidate("t", "model C Real x(start=0); equation der(x) = 2; end C;"),
        &bench_task("t"),
        &mut session,
        Some(&spec),
    );
    assert_statuses(
        &report,
        [StageStatus::Pass, StageStatus::Pass, StageStatus::Pass, StageStatus::Fail],
    );
    assert!(report.pass_s);
    assert!(!report.pass_f);
}

const MATRIX_FIXTURE: &str = r#"{
    "defaults": { "load": "ok", "check": "ok", "simulate": "ok" },
    "models": {
        "LoadFail": { "load": { "errors": [ { "message": "missing semicolon at 3:14" } ] } },
        "CheckFail": { "check": { "errors": [ { "message": "type mismatch" } ] } },
        "SimFail": { "simulate": { "errors": [ { "message": "division by zero at time 0.2" } ] } },
        "SimOk": { "simulate": { "trajectories": [
            { "variable": "y", "times": [0.0, 0.5, 1.0], "values": [0.0, 0.5, 1.0] } ] } }
    }
}"#;

/// Every combination of stage outcomes on the mock backend keeps the report
/// invariants: no Pass after a Fail, and pass_f implies pass_s.
#[test]
fn outcome_matrix_has_consistent_verdicts() {
    let ramp = sampled("y", 11, |t| t);
    let flat = sampled("y", 11, |_| 5.0);

    let cases: Vec<(&str, Option<FunctionalSpec>, bool)> = vec![
        ("model LoadFail end LoadFail;", None, false),
        ("model CheckFail end CheckFail;", None, false),
        ("model SimFail end SimFail;", None, false),
        ("model SimOk end SimOk;", None, false),
        ("model SimOk end SimOk;", Some(FunctionalSpec::new(vec![ramp.clone()])), false),
        ("model SimOk end SimOk;", Some(FunctionalSpec::new(vec![flat.clone()])), false),
        ("model LoadFail end LoadFail;", Some(FunctionalSpec::new(vec![ramp.clone()])), true),
        ("model CheckFail end CheckFail;", Some(FunctionalSpec::new(vec![ramp.clone()])), true),
        ("model SimFail end SimFail;", Some(FunctionalSpec::new(vec![ramp.clone()])), true),
        ("model SimOk end SimOk;", Some(FunctionalSpec::new(vec![ramp.clone()])), true),
        ("model SimOk end SimOk;", None, true),
    ];

    for (code, spec, exempt) in cases {
        let mut session = mock_backend_from_str(MATRIX_FIXTURE).unwrap();
        let mut task = bench_task("t");
        task.simulation_exempt = exempt;
        let report = run_pipeline(&candidate("t", code), &task, &mut session, spec.as_ref());

        let mut failed = false;
        for stage in &report.stages {
            if failed {
                assert_ne!(stage.status, StageStatus::Pass, "Pass after Fail in {report:?}");
                assert_eq!(stage.status, StageStatus::NotRun, "{report:?}");
            }
            if stage.status == StageStatus::Fail {
                failed = true;
                assert!(
                    stage.diagnostics.iter().any(|d| {
                        matches!(d.severity, modigen_core::simbackend::Severity::Error)
                    }),
                    "Fail without Error diagnostic: {report:?}"
                );
            }
        }
        assert!(!report.pass_f || report.pass_s, "pass_f without pass_s: {report:?}");
        // Exemption shows as Skipped only when the pipeline reaches the
        // simulate stage; a short-circuited run leaves it NotRun.
        let reached_simulate = report.stages[0].status == StageStatus::Pass
            && report.stages[1].status == StageStatus::Pass;
        if exempt && reached_simulate {
            assert_eq!(report.stage(ValidationStage::Simulate).status, StageStatus::Skipped);
        }
    }
}

#[test]
fn batch_preserves_order_and_handles_unknown_tasks() {
    let tasks: HashMap<String, BenchTask> =
        [("t".to_string(), bench_task("t"))].into_iter().collect();
    let specs = HashMap::new();
    let factory = || -> Result<Box<dyn BackendSession>, String> {
        Ok(Box::new(mock_backend_from_str(MATRIX_FIXTURE).unwrap()))
    };
    let candidates = vec![
        candidate("t", "model SimOk end SimOk;"),
        candidate("missing", "model X end X;"),
        candidate("t", "model LoadFail end LoadFail;"),
    ];
    let reports = validate_batch(&candidates, &tasks, &factory, &specs, 2);
    assert_eq!(reports.len(), 3);
    assert!(reports[0].pass_s);
    assert!(!reports[1].pass_s);
    assert!(reports[1].stages[0].diagnostics[0].message.contains("unknown task"));
    assert!(!reports[2].pass_s);
}

#[test]
fn batch_replaces_dead_session_and_retries() {
    // First call on each fresh session reports Unavailable via the "Flaky"
    // model; the retry gets a new session which also fails; the report must
    // record NotRun with a transport diagnostic instead of panicking.
    let fixture = r#"{ "models": { "Flaky": { "load": "unavailable" } } }"#;
    let tasks: HashMap<String, BenchTask> =
        [("t".to_string(), bench_task("t"))].into_iter().collect();
    let factory = || -> Result<Box<dyn BackendSession>, String> {
        Ok(Box::new(mock_backend_from_str(fixture).unwrap()))
    };
    let candidates = vec![candidate("t", "model Flaky end Flaky;")];
    let reports = validate_batch(&candidates, &tasks, &factory, &HashMap::new(), 1);
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].stages[0].status, StageStatus::NotRun);
    assert!(reports[0].stages[0].diagnostics[0].message.contains("backend unavailable"));
}

#[test]
fn empty_batch_is_empty() {
    let factory = || -> Result<Box<dyn BackendSession>, String> {
        Ok(Box::new(micro_backend()))
    };
    let reports = validate_batch(&[], &HashMap::new(), &factory, &HashMap::new(), 4);
    assert!(reports.is_empty());
}
