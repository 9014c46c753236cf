//! Inference orchestration: perceive the diagram into a SPICE description,
//! refine missing values, simulate, then reason with or without the
//! simulation result. Perception and reasoning are pluggable clients so the
//! whole loop runs offline with oracle/file/echo implementations.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::layout::DiagramLayout;
use crate::sim::{check_valid, simulate, SimStatus};
use crate::spice::{extract_value_map, parse_spice, refine_deck, RefineFallback, SpiceDeck};
use crate::{Float, SimResult};

/// Prompt templates shipped as editable text assets with named placeholders
/// {question}, {sl} and {result}.
pub mod prompts {
    pub const REFINE: &str = include_str!("prompts/refine.txt");
    pub const SAR: &str = include_str!("prompts/sar.txt");
    pub const SL: &str = include_str!("prompts/sl.txt");

    /// Substitutes every `{name}` placeholder; panics in debug builds if a
    /// placeholder survives, since clients must never see raw templates.
    pub fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
        let mut text = template.to_string();
        for (name, value) in pairs {
            text = text.replace(&format!("{{{name}}}"), value);
        }
        debug_assert!(!text.contains("{question}") && !text.contains("{sl}") && !text.contains("{result}"));
        text
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagram {
    /// Plotting-language source of the diagram.
    Tikz(String),
    /// Pre-rendered pixel diagram on disk.
    ImagePath(PathBuf),
    /// Already-extracted layout structure.
    Layout(DiagramLayout),
}

/// One problem instance: question text plus exactly one diagram variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub text: String,
    pub diagram: Diagram,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no perception output for problem `{0}`")]
    NoOutput(String),
    #[error("endpoint not configured: set {0}")]
    Endpoint(&'static str),
}

/// Diagram → SPICE text converter.
pub trait PerceptionClient: Send + Sync {
    fn perceive(&self, problem: &Problem) -> Result<String, ClientError>;
    fn name(&self) -> &'static str;
}

/// Prompt → text completion.
pub trait ReasoningClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;
    fn name(&self) -> &'static str;
}

/// Returns the dataset's gold deck for each problem id; the identity
/// perception model used for pipeline testing.
pub struct OracleClient {
    decks: BTreeMap<String, String>,
}

impl OracleClient {
    pub fn new(decks: BTreeMap<String, String>) -> Self {
        Self { decks }
    }
}

impl PerceptionClient for OracleClient {
    fn perceive(&self, problem: &Problem) -> Result<String, ClientError> {
        self.decks.get(&problem.id).cloned().ok_or_else(|| ClientError::NoOutput(problem.id.clone()))
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// Reads pre-recorded perception outputs: one `{id}.sp` file per problem.
pub struct FileClient {
    dir: PathBuf,
}

impl FileClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl PerceptionClient for FileClient {
    fn perceive(&self, problem: &Problem) -> Result<String, ClientError> {
        std::fs::read_to_string(self.dir.join(format!("{}.sp", problem.id)))
            .map_err(|_| ClientError::NoOutput(problem.id.clone()))
    }

    fn name(&self) -> &'static str {
        "file"
    }
}

/// Echoes the prompt back; lets the full loop run offline.
pub struct EchoClient;

impl ReasoningClient for EchoClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        Ok(prompt.to_string())
    }

    fn name(&self) -> &'static str {
        "echo"
    }
}

pub const MLLM_ENDPOINT_VAR: &str = "MLLM_ENDPOINT";
pub const MLLM_API_KEY_VAR: &str = "MLLM_API_KEY";
pub const PPM_ENDPOINT_VAR: &str = "PPM_ENDPOINT";

/// Minimal chat-style JSON contract: request {model, messages:[{role,
/// content}]}, response {content}. Endpoint and key come from environment
/// variables so any hosted model can be adapted.
pub struct RemoteReasoningClient {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    agent: ureq::Agent,
}

impl RemoteReasoningClient {
    pub fn from_env() -> Result<Self, ClientError> {
        let endpoint = std::env::var(MLLM_ENDPOINT_VAR).map_err(|_| ClientError::Endpoint(MLLM_ENDPOINT_VAR))?;
        Ok(Self {
            endpoint,
            api_key: std::env::var(MLLM_API_KEY_VAR).ok(),
            model: std::env::var("MLLM_MODEL").unwrap_or_else(|_| "default".to_string()),
            agent: ureq::Agent::new(),
        })
    }
}

impl ReasoningClient for RemoteReasoningClient {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = request.send_json(body).map_err(|e| ClientError::Transport(e.to_string()))?;
        let json: serde_json::Value = response.into_json().map_err(|e| ClientError::Transport(e.to_string()))?;
        json["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Transport("response missing `content`".into()))
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}

/// Remote perception endpoint: request {id, diagram}, response {content}.
pub struct RemotePerceptionClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemotePerceptionClient {
    pub fn from_env() -> Result<Self, ClientError> {
        let endpoint = std::env::var(PPM_ENDPOINT_VAR).map_err(|_| ClientError::Endpoint(PPM_ENDPOINT_VAR))?;
        Ok(Self { endpoint, agent: ureq::Agent::new() })
    }
}

impl PerceptionClient for RemotePerceptionClient {
    fn perceive(&self, problem: &Problem) -> Result<String, ClientError> {
        let body = serde_json::json!({ "id": problem.id, "diagram": problem.diagram });
        let response = self
            .agent
            .post(&self.endpoint)
            .send_json(body)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let json: serde_json::Value = response.into_json().map_err(|e| ClientError::Transport(e.to_string()))?;
        json["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Transport("response missing `content`".into()))
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}

/// Transport retry policy: `attempts` tries with exponential backoff.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay_ms: 100 }
    }
}

fn with_retry<T>(policy: RetryPolicy, mut call: impl FnMut() -> Result<T, ClientError>) -> Result<T, ClientError> {
    let mut delay = policy.base_delay_ms;
    let mut last = None;
    for attempt in 0..policy.attempts.max(1) {
        match call() {
            Ok(value) => return Ok(value),
            Err(ClientError::Transport(e)) => {
                last = Some(ClientError::Transport(e));
                if attempt + 1 < policy.attempts {
                    std::thread::sleep(std::time::Duration::from_millis(delay));
                    delay *= 2;
                }
            }
            // Non-transport failures are not retryable.
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(ClientError::Transport("no attempts made".into())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub step: String,
    pub input: String,
    pub output: String,
}

/// Raw client I/O retained for audit.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub events: Vec<TranscriptEvent>,
}

impl Transcript {
    fn push(&mut self, step: &str, input: impl Into<String>, output: impl Into<String>) {
        self.events.push(TranscriptEvent { step: step.to_string(), input: input.into(), output: output.into() });
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("perception output unparseable after retry: {reason}")]
    PerceptionFailed { reason: String, transcript: Transcript },
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone)]
pub struct CosOutcome {
    pub deck: SpiceDeck,
    pub deck_text: String,
    pub result: SimResult,
    pub transcript: Transcript,
}

/// Adapter giving the refine step a reasoning client plus the question.
struct ReasoningRefine<'a> {
    client: &'a dyn ReasoningClient,
    question: &'a str,
    policy: RetryPolicy,
    events: RefCell<Vec<(String, String)>>,
}

impl RefineFallback for ReasoningRefine<'_> {
    fn refine(&self, deck_text: &str) -> Option<String> {
        let prompt = prompts::fill(prompts::REFINE, &[("question", self.question), ("sl", deck_text)]);
        match with_retry(self.policy, || self.client.complete(&prompt)) {
            Ok(response) => {
                self.events.borrow_mut().push((prompt, response.clone()));
                Some(response)
            }
            Err(e) => {
                self.events.borrow_mut().push((prompt, format!("<error: {e}>")));
                None
            }
        }
    }
}

/// Perceive → refine → simulate. The refine client is consulted only when
/// the perceived deck contains `<Empty>` tokens.
pub fn chain_of_simulation(
    problem: &Problem,
    ppm: &dyn PerceptionClient,
    mllm: &dyn ReasoningClient,
) -> Result<CosOutcome, PipelineError> {
    chain_of_simulation_with(problem, ppm, mllm, RetryPolicy::default())
}

pub fn chain_of_simulation_with(
    problem: &Problem,
    ppm: &dyn PerceptionClient,
    mllm: &dyn ReasoningClient,
    policy: RetryPolicy,
) -> Result<CosOutcome, PipelineError> {
    let mut transcript = Transcript::default();
    let mut deck = None;
    let mut last_error = String::new();
    // One retry of perception when the output does not parse.
    for attempt in 0..2 {
        let raw = with_retry(policy, || ppm.perceive(problem))?;
        transcript.push(&format!("perceive[{attempt}]"), problem.id.clone(), raw.clone());
        match parse_spice(&raw) {
            Ok(parsed) => {
                deck = Some(parsed);
                break;
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    let Some(mut deck) = deck else {
        return Err(PipelineError::PerceptionFailed { reason: last_error, transcript });
    };

    if deck.has_empty() {
        let value_map = extract_value_map(&problem.text);
        let adapter = ReasoningRefine { client: mllm, question: &problem.text, policy, events: RefCell::new(Vec::new()) };
        let outcome = refine_deck(&deck, &value_map, Some(&adapter));
        for (input, output) in adapter.events.into_inner() {
            transcript.push("refine", input, output);
        }
        deck = outcome.deck;
    }

    let deck_text = deck.to_text();
    let result = simulate::<Float>(&deck);
    transcript.push("simulate", deck_text.clone(), serde_json::to_string(&result).unwrap_or_default());
    Ok(CosOutcome { deck, deck_text, result, transcript })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Sar,
    Sl,
}

#[derive(Debug, Clone)]
pub struct SarOutcome {
    pub answer: String,
    pub prompt_kind: PromptKind,
    pub prompt: String,
    pub transcript: Transcript,
}

/// Reason over the simulation outcome: with the result dictionary when it
/// is valid, from the SPICE description alone otherwise.
pub fn simulation_aided_reasoning(
    problem: &Problem,
    deck_text: &str,
    result: &SimResult,
    mllm: &dyn ReasoningClient,
) -> Result<SarOutcome, PipelineError> {
    simulation_aided_reasoning_with(problem, deck_text, result, mllm, RetryPolicy::default())
}

pub fn simulation_aided_reasoning_with(
    problem: &Problem,
    deck_text: &str,
    result: &SimResult,
    mllm: &dyn ReasoningClient,
    policy: RetryPolicy,
) -> Result<SarOutcome, PipelineError> {
    let mut transcript = Transcript::default();
    let (prompt_kind, prompt) = if check_valid(result) {
        let dict = serde_json::to_string(&result.values).unwrap_or_default();
        (
            PromptKind::Sar,
            prompts::fill(prompts::SAR, &[("question", &problem.text), ("sl", deck_text), ("result", &dict)]),
        )
    } else {
        (PromptKind::Sl, prompts::fill(prompts::SL, &[("question", &problem.text), ("sl", deck_text)]))
    };
    let answer = with_retry(policy, || mllm.complete(&prompt))?;
    transcript.push(if prompt_kind == PromptKind::Sar { "sar" } else { "sl" }, prompt.clone(), answer.clone());
    Ok(SarOutcome { answer, prompt_kind, prompt, transcript })
}

/// One line of the batch output JSONL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRecord {
    pub id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deck: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_status: Option<SimStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_kind: Option<PromptKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub transcript: Vec<TranscriptEvent>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BatchReport {
    pub total: usize,
    pub completed: usize,
    pub skipped: usize,
    pub ok: usize,
    pub failed: usize,
    pub sar: usize,
    pub sl: usize,
}

/// Runs every problem, appending one JSONL record each. Ids already present
/// in the output file are skipped, so interrupted batches resume. Partial
/// failures are recorded per problem; the batch never aborts.
pub fn run_batch(
    problems: &[Problem],
    ppm: &dyn PerceptionClient,
    mllm: &dyn ReasoningClient,
    out_path: &Path,
    jobs: usize,
) -> Result<BatchReport, std::io::Error> {
    let done: BTreeSet<String> = if out_path.exists() {
        let file = std::fs::File::open(out_path)?;
        std::io::BufReader::new(file)
            .lines()
            .map_while(Result::ok)
            .filter_map(|line| serde_json::from_str::<BatchRecord>(&line).ok().map(|r| r.id))
            .collect()
    } else {
        if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        BTreeSet::new()
    };

    let pending: Vec<&Problem> = problems.iter().filter(|p| !done.contains(&p.id)).collect();
    let mut report = BatchReport { total: problems.len(), skipped: problems.len() - pending.len(), ..Default::default() };

    let file = std::fs::OpenOptions::new().create(true).append(true).open(out_path)?;
    let writer = Mutex::new(std::io::BufWriter::new(file));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let records = Mutex::new(Vec::<BatchRecord>::new());

    let worker = || {
        loop {
            let index = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            let Some(problem) = pending.get(index) else { break };
            let record = run_one(problem, ppm, mllm);
            let line = serde_json::to_string(&record).expect("record serializes");
            {
                // One line per problem, flushed whole: append-only atomicity.
                let mut writer = writer.lock().unwrap();
                writeln!(writer, "{line}").expect("batch output writable");
                writer.flush().expect("batch output flushable");
            }
            records.lock().unwrap().push(record);
        }
    };
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(pending.len().max(1)) {
            scope.spawn(worker);
        }
    });

    for record in records.into_inner().unwrap() {
        report.completed += 1;
        if record.ok {
            report.ok += 1;
        } else {
            report.failed += 1;
        }
        match record.prompt_kind {
            Some(PromptKind::Sar) => report.sar += 1,
            Some(PromptKind::Sl) => report.sl += 1,
            None => {}
        }
    }
    Ok(report)
}

fn run_one(problem: &Problem, ppm: &dyn PerceptionClient, mllm: &dyn ReasoningClient) -> BatchRecord {
    match chain_of_simulation(problem, ppm, mllm) {
        Ok(cos) => {
            let mut transcript = cos.transcript.events;
            match simulation_aided_reasoning(problem, &cos.deck_text, &cos.result, mllm) {
                Ok(sar) => {
                    transcript.extend(sar.transcript.events);
                    BatchRecord {
                        id: problem.id.clone(),
                        ok: true,
                        deck: Some(cos.deck_text),
                        sim_status: Some(cos.result.status),
                        prompt_kind: Some(sar.prompt_kind),
                        answer: Some(sar.answer),
                        error: None,
                        transcript,
                    }
                }
                Err(e) => BatchRecord {
                    id: problem.id.clone(),
                    ok: false,
                    deck: Some(cos.deck_text),
                    sim_status: Some(cos.result.status),
                    prompt_kind: None,
                    answer: None,
                    error: Some(e.to_string()),
                    transcript,
                },
            }
        }
        Err(e) => {
            let transcript = match &e {
                PipelineError::PerceptionFailed { transcript, .. } => transcript.events.clone(),
                _ => Vec::new(),
            };
            BatchRecord {
                id: problem.id.clone(),
                ok: false,
                deck: None,
                sim_status: None,
                prompt_kind: None,
                answer: None,
                error: Some(e.to_string()),
                transcript,
            }
        }
    }
}
