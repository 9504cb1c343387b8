//! Prompt assembly, chat-completion transport, and Modelica code extraction.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::frontend::{tokenize, TokenKind};
use crate::graph::RetrievalResult;
use crate::simbackend::SimSettings;

pub const API_KEY_ENV: &str = "MODIGEN_API_KEY";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("authentication rejected by endpoint: {0}")]
    Auth(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid endpoint {0}")]
    Endpoint(String),
}

/// Generation task family; fixes the sampling defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[serde(alias = "component_generation")]
    Component,
    #[serde(alias = "testcase", alias = "test_case_generation")]
    TestCase,
}

impl TaskKind {
    /// Component generation samples tightly, test cases explore more.
    pub fn default_temperature(self) -> f64 {
        match self {
            TaskKind::Component => 0.3,
            TaskKind::TestCase => 0.7,
        }
    }

    /// k used by the pass@scenario metric for this task family.
    pub fn default_scenario(self) -> usize {
        match self {
            TaskKind::Component => 8,
            TaskKind::TestCase => 5,
        }
    }
}

pub const DEFAULT_TOP_K: u32 = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_name: String,
    pub endpoint_url: String,
    pub temperature: f64,
    /// Sent only when the endpoint is declared top_k-capable; hosted
    /// chat-completion APIs commonly reject the field.
    pub top_k: Option<u32>,
    #[serde(default)]
    pub top_k_capable: bool,
    pub n_samples: usize,
    pub max_tokens: usize,
    /// Seconds before an in-flight request is abandoned.
    pub request_timeout: f64,
    pub max_concurrent_requests: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model_name: String::new(),
            endpoint_url: String::new(),
            temperature: TaskKind::Component.default_temperature(),
            top_k: Some(DEFAULT_TOP_K),
            top_k_capable: false,
            n_samples: 1,
            max_tokens: 2048,
            request_timeout: 120.0,
            max_concurrent_requests: 4,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.n_samples == 0 {
            return Err("n_samples must be at least 1".into());
        }
        if self.max_concurrent_requests == 0 {
            return Err("max_concurrent_requests must be at least 1".into());
        }
        Ok(())
    }
}

/// One benchmark task from a bench JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchTask {
    pub id: String,
    pub kind: TaskKind,
    pub prompt: String,
    #[serde(default)]
    pub dependencies: Vec<String>,
    #[serde(default)]
    pub reference_model: Option<String>,
    #[serde(default)]
    pub reference_trajectories: Option<PathBuf>,
    #[serde(default)]
    pub simulation_exempt: bool,
    /// Wrapper model simulated in place of an exempt function-type task.
    #[serde(default)]
    pub use_case_model: Option<String>,
    /// Per-task overrides of the simulation settings.
    #[serde(default)]
    pub sim_settings: Option<SimSettings>,
}

/// One generated sample for a task. Round 0 is the initial generation;
/// repair rounds count up from 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Candidate {
    pub task_id: String,
    pub sample_index: usize,
    pub code: String,
    pub raw_response: String,
    pub round: usize,
}

/// Prepend retrieval snippets (and hard-coded dependency names) to the task
/// prompt under a delimited reference-context section. Without context the
/// prompt passes through untouched.
pub fn assemble_prompt(task: &BenchTask, retrieval: Option<&RetrievalResult>) -> String {
    let snippets = retrieval.map(|r| r.snippets.as_slice()).unwrap_or(&[]);
    if snippets.is_empty() && task.dependencies.is_empty() {
        return task.prompt.clone();
    }
    let mut out = String::from("Reference context:\n");
    for snippet in snippets {
        out.push_str(&format!("[{}]\n{}\n\n", snippet.source_label, snippet.text));
    }
    if !task.dependencies.is_empty() {
        out.push_str(&format!("Required libraries: {}\n\n", task.dependencies.join(", ")));
    }
    out.push_str("---\n");
    out.push_str(&task.prompt);
    out
}

pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: usize,
    pub top_k: Option<u32>,
}

/// A chat-completion transport; returns the assistant message text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GenError>;
}

/// Shared transports keep replay state across pipeline stages.
impl ChatTransport for std::sync::Arc<dyn ChatTransport> {
    fn complete(&self, request: &ChatRequest) -> Result<String, GenError> {
        (**self).complete(request)
    }
}

/// HTTP POST to a chat-completions-compatible endpoint. Credentials come
/// from MODIGEN_API_KEY and travel as a bearer token.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(url: &str, timeout: Duration) -> Result<Self, GenError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GenError::Transport(e.to_string()))?;
        Ok(HttpTransport {
            client,
            url: url.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok(),
        })
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, GenError> {
        let mut body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "n": 1,
        });
        if let Some(top_k) = request.top_k {
            body["top_k"] = json!(top_k);
        }
        let mut http = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let response = http.send().map_err(|e| GenError::Transport(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(GenError::Auth(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(GenError::Transport(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value =
            response.json().map_err(|e| GenError::Transport(e.to_string()))?;
        extract_message_text(&value)
            .ok_or_else(|| GenError::Transport(format!("malformed completion response: {value}")))
    }
}

fn extract_message_text(value: &serde_json::Value) -> Option<String> {
    let choice = value.get("choices")?.get(0)?;
    if let Some(content) = choice.pointer("/message/content").and_then(|v| v.as_str()) {
        return Some(content.to_string());
    }
    choice.get("text").and_then(|v| v.as_str()).map(str::to_string)
}

/// Replays canned responses from a JSONL file in order; enables hermetic
/// pipeline runs via `--endpoint file://responses.jsonl`. Each line is either
/// a JSON string or an object with a "content" field.
pub struct FileReplayTransport {
    responses: Vec<String>,
    cursor: Mutex<usize>,
}

impl FileReplayTransport {
    pub fn from_path(path: &std::path::Path) -> Result<Self, GenError> {
        let content = std::fs::read_to_string(path)
            .map_err(|e| GenError::Endpoint(format!("{}: {e}", path.display())))?;
        let mut responses = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| GenError::Endpoint(format!("{}:{}: {e}", path.display(), idx + 1)))?;
            let text = match &value {
                serde_json::Value::String(s) => s.clone(),
                other => other
                    .get("content")
                    .and_then(|v| v.as_str())
                    .map(str::to_string)
                    .ok_or_else(|| {
                        GenError::Endpoint(format!(
                            "{}:{}: expected a string or an object with \"content\"",
                            path.display(),
                            idx + 1
                        ))
                    })?,
            };
            responses.push(text);
        }
        Ok(FileReplayTransport { responses, cursor: Mutex::new(0) })
    }
}

impl ChatTransport for FileReplayTransport {
    fn complete(&self, _request: &ChatRequest) -> Result<String, GenError> {
        let mut cursor = self.cursor.lock().unwrap();
        match self.responses.get(*cursor) {
            Some(text) => {
                *cursor += 1;
                Ok(text.clone())
            }
            None => Err(GenError::Transport("replay file exhausted".into())),
        }
    }
}

/// Build the transport matching `endpoint_url`: `file://` replays canned
/// responses, anything http-like goes over the wire.
pub fn transport_for(config: &GenerationConfig) -> Result<Box<dyn ChatTransport>, GenError> {
    if let Some(path) = config.endpoint_url.strip_prefix("file://") {
        return Ok(Box::new(FileReplayTransport::from_path(std::path::Path::new(path))?));
    }
    if config.endpoint_url.starts_with("http://") || config.endpoint_url.starts_with("https://") {
        return Ok(Box::new(HttpTransport::new(
            &config.endpoint_url,
            Duration::from_secs_f64(config.request_timeout),
        )?));
    }
    Err(GenError::Endpoint(config.endpoint_url.clone()))
}

/// Issues `n_samples` independent requests with retries and code extraction.
pub struct Sampler<'a> {
    config: &'a GenerationConfig,
    transport: Box<dyn ChatTransport>,
    retry_backoff: Vec<Duration>,
}

impl<'a> Sampler<'a> {
    pub fn new(config: &'a GenerationConfig) -> Result<Self, GenError> {
        config.validate().map_err(GenError::Endpoint)?;
        Ok(Sampler {
            transport: transport_for(config)?,
            config,
            retry_backoff: vec![
                Duration::from_secs(1),
                Duration::from_secs(2),
                Duration::from_secs(4),
            ],
        })
    }

    pub fn with_transport(
        config: &'a GenerationConfig,
        transport: Box<dyn ChatTransport>,
    ) -> Result<Self, GenError> {
        config.validate().map_err(GenError::Endpoint)?;
        Ok(Sampler {
            config,
            transport,
            retry_backoff: vec![
                Duration::from_secs(1),
                Duration::from_secs(2),
                Duration::from_secs(4),
            ],
        })
    }

    /// Shorten the retry schedule (tests).
    pub fn with_backoff(mut self, backoff: Vec<Duration>) -> Self {
        self.retry_backoff = backoff;
        self
    }

    fn complete_with_retry(&self, prompt: &str) -> Result<String, GenError> {
        let request = ChatRequest {
            model: &self.config.model_name,
            prompt,
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            top_k: if self.config.top_k_capable { self.config.top_k } else { None },
        };
        let mut attempt = 0;
        loop {
            match self.transport.complete(&request) {
                Ok(text) => return Ok(text),
                Err(GenError::Auth(e)) => return Err(GenError::Auth(e)),
                Err(e) if attempt < self.retry_backoff.len() => {
                    log::warn!("request failed ({e}); retry {}", attempt + 1);
                    std::thread::sleep(self.retry_backoff[attempt]);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Generate round-0 candidates for one task. Requests run up to
    /// `max_concurrent_requests` at a time; candidates come back ordered by
    /// sample index. Transport failures (after retries) become empty-code
    /// candidates carrying the error text; auth failures abort the batch.
    pub fn sample(&self, task_id: &str, prompt: &str) -> Result<Vec<Candidate>, GenError> {
        let n = self.config.n_samples;
        let slots: Vec<Mutex<Option<Result<String, GenError>>>> =
            (0..n).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.max_concurrent_requests.min(n).max(1);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= n {
                        break;
                    }
                    let outcome = self.complete_with_retry(prompt);
                    *slots[index].lock().unwrap() = Some(outcome);
                });
            }
        });

        let mut candidates = Vec::with_capacity(n);
        for (sample_index, slot) in slots.into_iter().enumerate() {
            let outcome = slot.into_inner().unwrap().expect("worker filled every slot");
            match outcome {
                Ok(text) => candidates.push(Candidate {
                    task_id: task_id.to_string(),
                    sample_index,
                    code: extract_code(&text),
                    raw_response: text,
                    round: 0,
                }),
                Err(GenError::Auth(e)) => return Err(GenError::Auth(e)),
                Err(e) => candidates.push(Candidate {
                    task_id: task_id.to_string(),
                    sample_index,
                    code: String::new(),
                    raw_response: format!("transport error: {e}"),
                    round: 0,
                }),
            }
        }
        Ok(candidates)
    }
}

/// Pull Modelica code out of a model response: the first fenced block whose
/// info string is empty or "modelica" (else the first block); otherwise the
/// longest bare definition from a class keyword to its matching
/// `end <name>;`; otherwise the input verbatim.
pub fn extract_code(response_text: &str) -> String {
    let mut blocks: Vec<(String, String)> = Vec::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in response_text.lines() {
        let trimmed = line.trim_start();
        if let Some(info) = trimmed.strip_prefix("```") {
            match current.take() {
                Some((block_info, lines)) => blocks.push((block_info, lines.join("\n"))),
                None => current = Some((info.trim().to_lowercase(), Vec::new())),
            }
            continue;
        }
        if let Some((_, lines)) = current.as_mut() {
            lines.push(line);
        }
    }
    if !blocks.is_empty() {
        let preferred = blocks
            .iter()
            .find(|(info, _)| info.is_empty() || info == "modelica")
            .unwrap_or(&blocks[0]);
        return preferred.1.clone();
    }

    if let Some(definition) = longest_bare_definition(response_text) {
        return definition;
    }
    response_text.to_string()
}

const DEFINITION_STARTERS: &[&str] =
    &["model", "block", "function", "connector", "class", "record", "partial", "package", "type"];

/// Longest substring starting at a line that begins a class definition and
/// running to the matching `end <name>;`.
fn longest_bare_definition(text: &str) -> Option<String> {
    let mut best: Option<String> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        let starts_definition = DEFINITION_STARTERS
            .iter()
            .any(|kw| trimmed.starts_with(kw) && !trimmed[kw.len()..].starts_with(char::is_alphanumeric));
        if starts_definition {
            if let Some(candidate) = definition_from(&text[offset..]) {
                if best.as_ref().map(|b| candidate.len() > b.len()).unwrap_or(true) {
                    best = Some(candidate);
                }
            }
        }
        offset += line.len();
    }
    best
}

/// From text starting at a definition line, cut at the matching
/// `end <name>;` of the first defined class.
fn definition_from(text: &str) -> Option<String> {
    let tokens = tokenize(text).ok()?;
    let mut iter = tokens.iter().filter(|t| t.kind != TokenKind::Comment).peekable();
    let mut name = None;
    while let Some(token) = iter.next() {
        if token.kind == TokenKind::Keyword
            && DEFINITION_STARTERS.contains(&token.text.as_str())
            && token.text != "partial"
        {
            if let Some(next) = iter.peek() {
                if next.kind == TokenKind::Identifier {
                    name = Some(next.text.clone());
                }
            }
            break;
        }
    }
    let name = name?;
    // Find `end <name> ;` in the raw token stream.
    let significant: Vec<_> = tokens.iter().filter(|t| t.kind != TokenKind::Comment).collect();
    for window in significant.windows(3) {
        if window[0].is_keyword("end")
            && window[1].kind == TokenKind::Identifier
            && window[1].text == name
            && window[2].is_punct(";")
        {
            let end_line = window[2].line as usize;
            let cut: String = text
                .split_inclusive('\n')
                .take(end_line)
                .collect::<String>();
            let cut = cut.trim_end().to_string();
            return Some(cut);
        }
    }
    None
}
