//! Hermetic repair-loop runs: scripted model responses against the mock and
//! micro backends.

use std::sync::Mutex;
use std::time::Duration;

use modigen_core::feedback::{
    repair_loop_with_sampler, FeedbackConfig, FUNCTIONAL_FAILURE_MESSAGE,
};
use modigen_core::genclient::{
    BenchTask, Candidate, ChatRequest, ChatTransport, GenError, GenerationConfig, Sampler,
    TaskKind,
};
use modigen_core::simbackend::{micro_backend, mock_backend_from_str};
use modigen_core::validate::FunctionalSpec;

struct Script {
    responses: Mutex<Vec<String>>,
    prompts: Mutex<Vec<String>>,
}

impl ChatTransport for Script {
    fn complete(&self, request: &ChatRequest) -> Result<String, GenError> {
        self.prompts.lock().unwrap().push(request.prompt.to_string());
        let mut responses = self.responses.lock().unwrap();
        if responses.is_empty() {
            Err(GenError::Transport("script exhausted".into()))
        } else {
            Ok(responses.remove(0))
        }
    }
}

fn task(id: &str) -> BenchTask {
    BenchTask {
        id: id.into(),
        kind: TaskKind::Component,
        prompt: "Write a constant-rate integrator model.".into(),
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

fn config() -> GenerationConfig {
    GenerationConfig { endpoint_url: "file:///unused".into(), n_samples: 1, ..Default::default() }
}

fn scripted_sampler<'c>(
    config: &'c GenerationConfig,
    responses: Vec<&str>,
) -> (Sampler<'c>, std::sync::Arc<Mutex<Vec<String>>>) {
    // Keep a handle on the prompts the "model" saw.
    let prompts = std::sync::Arc::new(Mutex::new(Vec::new()));
    struct Sharing {
        inner: Script,
        prompts: std::sync::Arc<Mutex<Vec<String>>>,
    }
    impl ChatTransport for Sharing {
        fn complete(&self, request: &ChatRequest) -> Result<String, GenError> {
            self.prompts.lock().unwrap().push(request.prompt.to_string());
            self.inner.complete(request)
        }
    }
    let transport = Sharing {
        inner: Script {
            responses: Mutex::new(responses.into_iter().map(str::to_string).collect()),
            prompts: Mutex::new(Vec::new()),
        },
        prompts: prompts.clone(),
    };
    let sampler = Sampler::with_transport(config, Box::new(transport))
        .unwrap()
        .with_backoff(vec![Duration::from_millis(1); 3]);
    (sampler, prompts)
}

const MOCK_FIXTURE: &str = r#"{
    "defaults": { "load": { "errors": [ { "message": "does not parse as Modelica" } ] } },
    "models": {
        "Bad": { "load": { "errors": [ { "message": "missing semicolon at 3:14", "line": 3, "column": 14 } ] } },
        "Fixed": { "simulate": { "trajectories": [
            { "variable": "y", "times": [0.0, 1.0], "values": [1.0, 1.0] } ] } }
    }
}"#;

#[test]
fn scripted_fix_passes_on_round_one() {
    let cfg = config();
    let (sampler, prompts) =
        scripted_sampler(&cfg, vec!["```modelica\nmodel Fixed Real y; end Fixed;\n```"]);
    let mut session = mock_backend_from_str(MOCK_FIXTURE).unwrap();
    let (final_candidate, attempts) = repair_loop_with_sampler(
        &task("t"),
        &candidate("t", "model Bad Real y end Bad;"),
        &mut session,
        &sampler,
        &FeedbackConfig::default(),
        None,
        None,
    )
    .unwrap();

    assert_eq!(attempts.len(), 1);
    assert_eq!(attempts[0].round, 1);
    assert_eq!(attempts[0].candidate.round, 1);
    assert!(attempts[0].report.pass_s);
    assert_eq!(final_candidate.code, "model Fixed Real y; end Fixed;");

    // The repair prompt carried the verbatim load diagnostic and the
    // original prompt.
    let seen = prompts.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert!(seen[0].contains("missing semicolon at 3:14"));
    assert!(seen[0].starts_with("Write a constant-rate integrator model."));
    assert!(seen[0].contains("model Bad Real y end Bad;"));
}

#[test]
fn passing_candidate_needs_no_attempts() {
    let cfg = config();
    let (sampler, _) = scripted_sampler(&cfg, vec![]);
    let mut session = micro_backend();
    let good = "model Good Real x(start=0); equation der(x) = 1; end Good;";
    let (final_candidate, attempts) = repair_loop_with_sampler(
        &task("t"),
        &candidate("t", good),
        &mut session,
        &sampler,
        &FeedbackConfig::default(),
        None,
        None,
    )
    .unwrap();
    assert!(attempts.is_empty());
    assert_eq!(final_candidate.code, good);
}

#[test]
fn budget_exhaustion_keeps_last_failure() {
    let cfg = config();
    let (sampler, _) = scripted_sampler(
        &cfg,
        vec!["still broken, sorry", "model Bad Real y end Bad;"],
    );
    let mut session = mock_backend_from_str(MOCK_FIXTURE).unwrap();
    let feedback = FeedbackConfig { max_rounds: 2, include_failed_code: true };
    let (_, attempts) = repair_loop_with_sampler(
        &task("t"),
        &candidate("t", "model Bad Real y end Bad;"),
        &mut session,
        &sampler,
        &feedback,
        None,
        None,
    )
    .unwrap();
    assert_eq!(attempts.len(), 2);
    assert_eq!(attempts[0].round, 1);
    assert_eq!(attempts[1].round, 2);
    assert!(!attempts[1].report.pass_s);
}

#[test]
fn zero_rounds_returns_input_unchanged() {
    let cfg = config();
    let (sampler, _) = scripted_sampler(&cfg, vec!["model Fixed end Fixed;"]);
    let mut session = mock_backend_from_str(MOCK_FIXTURE).unwrap();
    let original = candidate("t", "model Bad Real y end Bad;");
    let feedback = FeedbackConfig { max_rounds: 0, include_failed_code: true };
    let (final_candidate, attempts) = repair_loop_with_sampler(
        &task("t"),
        &original,
        &mut session,
        &sampler,
        &feedback,
        None,
        None,
    )
    .unwrap();
    assert!(attempts.is_empty());
    assert_eq!(final_candidate.code, original.code);
}

#[test]
fn functional_failure_prompt_carries_fixed_sentence() {
    // Candidate simulates fine but diverges from the reference; the repair
    // prompt must contain the exact feedback sentence.
    let cfg = config();
    let (sampler, prompts) =
        scripted_sampler(&cfg, vec!["model C Real x(start=0); equation der(x) = 1; end C;"]);
    let mut session = micro_backend();

    let mut reference_session = micro_backend();
    use modigen_core::simbackend::BackendSession;
    reference_session
        .load_code("model R Real x(start=0); equation der(x) = 1; end R;")
        .unwrap();
    let reference = reference_session.simulate("R", &Default::default()).unwrap();
    let spec = FunctionalSpec::new(reference);

    let wrong = "model C Real x(start=0); equation der(x) = 2; end C;";
    let (final_candidate, attempts) = repair_loop_with_sampler(
        &task("t"),
        &candidate("t", wrong),
        &mut session,
        &sampler,
        &FeedbackConfig::default(),
        Some(&spec),
        None,
    )
    .unwrap();

    assert_eq!(attempts.len(), 1);
    let seen = prompts.lock().unwrap();
    assert!(seen[0].contains(FUNCTIONAL_FAILURE_MESSAGE), "{}", seen[0]);
    assert!(attempts[0].report.pass_f);
    assert!(final_candidate.code.contains("der(x) = 1"));
}

#[test]
fn transport_failure_consumes_round_with_empty_candidate() {
    let cfg = config();
    let (sampler, _) = scripted_sampler(&cfg, vec![]);
    let mut session = mock_backend_from_str(MOCK_FIXTURE).unwrap();
    let (final_candidate, attempts) = repair_loop_with_sampler(
        &task("t"),
        &candidate("t", "model Bad Real y end Bad;"),
        &mut session,
        &sampler,
        &FeedbackConfig::default(),
        None,
        None,
    )
    .unwrap();
    assert_eq!(attempts.len(), 1);
    assert!(final_candidate.code.is_empty());
    assert!(final_candidate.raw_response.contains("transport error"));
    assert!(!attempts[0].report.pass_s);
}
