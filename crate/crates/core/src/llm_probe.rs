//! Prompting completion models to interpret answers, with a record/replay
//! client so evaluations can be rerun offline.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{lower_tokens, Label};
use crate::distant::QAInstance;
use crate::error::{Error, Result};

pub const DEFAULT_PREAMBLE: &str = "Below is an instruction and a yes-no question-answer pair input. Write a response that appropriately completes the request.";
pub const DEFAULT_INSTRUCTION: &str = "I need you to help me understand indirect answers to yes-no questions. Indirect answers can be interpreted with three meanings: Yes, No, and Middle. Simply reply Yes, No or Middle based on the question and answer.";
pub const DEFAULT_CLOSING: &str = "Does the answer mean Yes, No or Middle?";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotExample {
    pub question: String,
    pub answer: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    pub instruction_text: String,
    pub shot_examples: Vec<ShotExample>,
    pub closing_question: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        let shot = |q: &str, a: &str, label| ShotExample {
            question: q.into(),
            answer: a.into(),
            label,
        };
        Self {
            preamble: DEFAULT_PREAMBLE.into(),
            instruction_text: DEFAULT_INSTRUCTION.into(),
            shot_examples: vec![
                shot(
                    "Are you coming to the party tonight?",
                    "I already bought a gift for the host.",
                    Label::Yes,
                ),
                shot(
                    "Do you eat meat?",
                    "I have been vegetarian for ten years.",
                    Label::No,
                ),
                shot(
                    "Will you finish the report by Friday?",
                    "It depends on how many meetings I get pulled into.",
                    Label::Middle,
                ),
                shot(
                    "Did you enjoy the movie?",
                    "I would watch it again tomorrow.",
                    Label::Yes,
                ),
            ],
            closing_question: DEFAULT_CLOSING.into(),
        }
    }
}

fn display_label(label: Label) -> &'static str {
    match label {
        Label::Yes => "Yes",
        Label::No => "No",
        Label::Middle => "Middle",
    }
}

fn push_input(out: &mut String, question: &str, answer: &str, closing: &str) {
    out.push_str("### Input:\n\n");
    out.push_str(&format!("Question: \"{question}\"\n\n"));
    out.push_str(&format!("Answer: \"{answer}\"\n\n"));
    out.push_str(closing);
    out.push_str("\n\n");
}

/// Renders the instruction, `shots` worked examples, and the target pair,
/// ending at `### Response:` with no trailing newline.
pub fn build_prompt(instance: &QAInstance, template: &PromptTemplate, shots: usize) -> Result<String> {
    if shots > template.shot_examples.len() {
        return Err(Error::InsufficientShots {
            requested: shots,
            available: template.shot_examples.len(),
        });
    }
    let mut out = String::new();
    out.push_str(&template.preamble);
    out.push_str("\n\n### Instruction: ");
    out.push_str(&template.instruction_text);
    out.push_str("\n\n");
    for ex in &template.shot_examples[..shots] {
        push_input(&mut out, &ex.question, &ex.answer, &template.closing_question);
        out.push_str("### Response: ");
        out.push_str(display_label(ex.label));
        out.push_str("\n\n");
    }
    push_input(
        &mut out,
        &instance.question,
        &instance.answer,
        &template.closing_question,
    );
    out.push_str("### Response:");
    Ok(out)
}

/// A completion mapped to a label; `label` is `None` when unmapped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedResponse {
    pub raw: String,
    pub label: Option<Label>,
}

pub fn map_response(raw: &str) -> MappedResponse {
    let found: BTreeSet<Label> = lower_tokens(raw)
        .iter()
        .filter_map(|t| match t.as_str() {
            "yes" => Some(Label::Yes),
            "no" => Some(Label::No),
            "middle" => Some(Label::Middle),
            _ => None,
        })
        .collect();
    MappedResponse {
        raw: raw.to_string(),
        label: if found.len() == 1 {
            found.into_iter().next()
        } else {
            None
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            top_p: 0.1,
            max_tokens: 4,
        }
    }
}

pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String>;

    /// Recorded in run manifests.
    fn identity(&self) -> String;
}

/// Hex SHA-256 over the prompt and generation parameters.
pub fn recording_key(prompt: &str, params: &GenerationParams) -> String {
    let canonical = serde_json::json!({
        "prompt": prompt,
        "temperature": params.temperature,
        "top_p": params.top_p,
        "max_tokens": params.max_tokens,
    });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub prompt: String,
    pub params: GenerationParams,
    pub completion: String,
}

/// Serves completions from a directory of `<digest>.json` recordings.
#[derive(Debug)]
pub struct ReplayClient {
    dir: PathBuf,
    store: HashMap<String, String>,
}

impl ReplayClient {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut store = HashMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let rec: Recording = serde_json::from_str(&text)?;
            store.insert(recording_key(&rec.prompt, &rec.params), rec.completion);
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            store,
        })
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }
}

impl CompletionClient for ReplayClient {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        let key = recording_key(prompt, params);
        self.store
            .get(&key)
            .cloned()
            .ok_or(Error::MissingRecording(key))
    }

    fn identity(&self) -> String {
        format!("replay:{}", self.dir.display())
    }
}

pub fn write_recording(dir: impl AsRef<Path>, rec: &Recording) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}.json", recording_key(&rec.prompt, &rec.params)));
    let mut json = serde_json::to_string_pretty(rec)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Forwards to another client and stores every completion for replay.
pub struct RecordingClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: CompletionClient> RecordingClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
        }
    }
}

impl<C: CompletionClient> CompletionClient for RecordingClient<C> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        let completion = self.inner.complete(prompt, params)?;
        write_recording(
            &self.dir,
            &Recording {
                prompt: prompt.to_string(),
                params: params.clone(),
                completion: completion.clone(),
            },
        )?;
        Ok(completion)
    }

    fn identity(&self) -> String {
        format!("recording:{}", self.inner.identity())
    }
}

#[derive(Debug, Clone)]
pub struct HttpClientConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub min_interval: Duration,
}

pub const ENDPOINT_VAR: &str = "YESNO_LLM_ENDPOINT";
pub const API_KEY_VAR: &str = "YESNO_LLM_API_KEY";
pub const MODEL_VAR: &str = "YESNO_LLM_MODEL";

impl HttpClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            model: None,
            timeout: Duration::from_secs(60),
            max_attempts: 4,
            initial_backoff: Duration::from_millis(500),
            min_interval: Duration::from_millis(0),
        }
    }

    /// Reads the endpoint, credential and model name from the environment.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_VAR)
            .map_err(|_| Error::InvalidConfig(format!("{ENDPOINT_VAR} is not set")))?;
        let mut cfg = Self::new(endpoint);
        cfg.api_key = std::env::var(API_KEY_VAR).ok();
        cfg.model = std::env::var(MODEL_VAR).ok();
        Ok(cfg)
    }
}

/// Plain JSON-over-HTTP completion client. The request body is
/// `{prompt, temperature, top_p, max_tokens[, model]}`; the completion is
/// read from `choices[0].text`, `choices[0].message.content`,
/// `completion` or `text`, whichever is present.
pub struct HttpClient {
    config: HttpClientConfig,
    agent: ureq::Agent,
    last_request: Mutex<Option<Instant>>,
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl HttpClient {
    pub fn new(config: HttpClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Self {
            config,
            agent,
            last_request: Mutex::new(None),
        }
    }

    fn throttle(&self) {
        let mut last = self.last_request.lock().unwrap();
        if let Some(at) = *last {
            let elapsed = at.elapsed();
            if elapsed < self.config.min_interval {
                std::thread::sleep(self.config.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn attempt(&self, body: &serde_json::Value) -> std::result::Result<String, Attempt> {
        self.throttle();
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
                return Err(Attempt::Retry(format!("HTTP {code}")))
            }
            Err(ureq::Error::StatusCode(code)) => return Err(Attempt::Fatal(format!("HTTP {code}"))),
            Err(e) => return Err(Attempt::Retry(e.to_string())),
        };
        let value: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(format!("bad response body: {e}")))?;
        extract_completion(&value)
            .ok_or_else(|| Attempt::Fatal("response has no completion text".into()))
    }
}

pub fn extract_completion(value: &serde_json::Value) -> Option<String> {
    let choice = value.pointer("/choices/0");
    choice
        .and_then(|c| c.get("text"))
        .or_else(|| choice.and_then(|c| c.pointer("/message/content")))
        .or_else(|| value.get("completion"))
        .or_else(|| value.get("text"))
        .and_then(|v| v.as_str())
        .map(str::to_string)
}

impl CompletionClient for HttpClient {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        let mut body = serde_json::json!({
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        });
        if let Some(model) = &self.config.model {
            body["model"] = serde_json::Value::String(model.clone());
        }
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts.max(1) {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(msg)) => return Err(Error::Transport(msg)),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("attempt {attempt} failed: {msg}");
                    last = msg;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(Error::Transport(format!(
            "gave up after {} attempts: {last}",
            self.config.max_attempts
        )))
    }

    fn identity(&self) -> String {
        match &self.config.model {
            Some(m) => format!("http:{}#{m}", self.config.endpoint),
            None => format!("http:{}", self.config.endpoint),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub client: String,
    pub params: GenerationParams,
    pub shots: usize,
    pub parallelism: usize,
    pub instances: usize,
    pub unmapped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    pub responses: Vec<MappedResponse>,
    pub unmapped: usize,
    pub manifest: RunManifest,
}

/// Prompts the client once per instance with up to `parallelism` requests
/// in flight. Responses come back in input order.
pub fn probe_benchmark(
    instances: &[QAInstance],
    template: &PromptTemplate,
    shots: usize,
    client: &dyn CompletionClient,
    params: &GenerationParams,
    parallelism: usize,
) -> Result<ProbeOutcome> {
    let prompts = instances
        .iter()
        .map(|x| build_prompt(x, template, shots))
        .collect::<Result<Vec<_>>>()?;
    let workers = parallelism.max(1).min(prompts.len().max(1));
    let next = AtomicUsize::new(0);
    let mut results: Vec<(usize, Result<String>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::SeqCst);
                        if i >= prompts.len() {
                            break;
                        }
                        done.push((i, client.complete(&prompts[i], params)));
                    }
                    done
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("probe worker panicked"))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);
    let responses = results
        .into_iter()
        .map(|(_, r)| r.map(|raw| map_response(&raw)))
        .collect::<Result<Vec<_>>>()?;
    let unmapped = responses.iter().filter(|r| r.label.is_none()).count();
    Ok(ProbeOutcome {
        manifest: RunManifest {
            client: client.identity(),
            params: params.clone(),
            shots,
            parallelism: workers,
            instances: instances.len(),
            unmapped,
        },
        responses,
        unmapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distant::{Origin, Source};

    fn qa(q: &str, a: &str) -> QAInstance {
        QAInstance {
            context: vec![],
            question: q.into(),
            answer: a.into(),
            label: None,
            source: Source::Gold,
            origin: Origin::default(),
        }
    }

    struct Echo(&'static str);

    impl CompletionClient for Echo {
        fn complete(&self, _: &str, _: &GenerationParams) -> Result<String> {
            Ok(self.0.into())
        }
        fn identity(&self) -> String {
            "echo".into()
        }
    }

    #[test]
    fn block_counts() {
        let t = PromptTemplate::default();
        let x = qa("Do you like Mexican food?", "Sure.");
        let zero = build_prompt(&x, &t, 0).unwrap();
        let four = build_prompt(&x, &t, 4).unwrap();
        assert_eq!(zero.matches("### Input:").count(), 1);
        assert_eq!(four.matches("### Input:").count(), 5);
        assert_eq!(four.matches("### Response:").count(), 5);
        assert!(zero.ends_with("### Response:"));
        assert_eq!(zero, build_prompt(&x, &t, 0).unwrap());
        assert!(four.starts_with(&zero[..zero.find("### Input:").unwrap()]));
    }

    #[test]
    fn too_many_shots() {
        let err = build_prompt(&qa("a", "b"), &PromptTemplate::default(), 5).unwrap_err();
        assert!(matches!(err, Error::InsufficientShots { requested: 5, available: 4 }));
    }

    #[test]
    fn mapping_examples() {
        assert_eq!(map_response("Yes").label, Some(Label::Yes));
        assert_eq!(map_response("The answer means Middle.").label, Some(Label::Middle));
        assert_eq!(map_response("Maybe yes, maybe no").label, None);
        assert_eq!(map_response("I cannot say").label, None);
        assert_eq!(map_response(" no.").label, Some(Label::No));
        assert_eq!(map_response("YES!").label, Some(Label::Yes));
        assert_eq!(map_response("Yes, yes").label, Some(Label::Yes));
        assert_eq!(map_response("Nobody").label, None);
    }

    #[test]
    fn keys_depend_on_params() {
        let p = GenerationParams::default();
        let q = GenerationParams {
            max_tokens: 5,
            ..p.clone()
        };
        assert_ne!(recording_key("x", &p), recording_key("x", &q));
        assert_eq!(recording_key("x", &p).len(), 64);
    }

    #[test]
    fn parallel_probe_keeps_order() {
        let xs: Vec<_> = (0..17).map(|i| qa(&format!("Is it {i}?"), "Yes")).collect();
        let out = probe_benchmark(
            &xs,
            &PromptTemplate::default(),
            0,
            &Echo("Yes"),
            &GenerationParams::default(),
            4,
        )
        .unwrap();
        assert_eq!(out.responses.len(), 17);
        assert_eq!(out.unmapped, 0);
        assert_eq!(out.manifest.client, "echo");
        assert!(out.responses.iter().all(|r| r.label == Some(Label::Yes)));
    }

    #[test]
    fn completion_extraction() {
        use serde_json::json;
        let v = json!({"choices":[{"text":" Yes"}]});
        assert_eq!(extract_completion(&v).as_deref(), Some(" Yes"));
        let v = json!({"choices":[{"message":{"role":"assistant","content":"No"}}]});
        assert_eq!(extract_completion(&v).as_deref(), Some("No"));
        assert_eq!(extract_completion(&json!({"completion":"Middle"})).as_deref(), Some("Middle"));
        assert_eq!(extract_completion(&json!({"other":1})), None);
    }
}
