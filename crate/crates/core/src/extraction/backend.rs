//! Model backends: the remote LLM endpoint and the deterministic mock.
//!
//! Both implement [`ModelBackend`] and must be safe for concurrent calls;
//! the pipeline fans segments out across workers.

use super::tasks::TaskName;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("authentication failure: {0}")]
    Auth(String),
    #[error("no mock fixture for task {task} with input hash {hash}")]
    MissingFixture { task: TaskName, hash: String },
    #[error("backend config error: {0}")]
    Config(String),
}

impl BackendError {
    /// Only transport failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

/// Decoding settings sent with every request. Fixed for stable output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecodingParams {
    pub temperature: f32,
    pub max_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams { temperature: 0.0, max_tokens: 1024 }
    }
}

/// A completion source for extraction tasks.
pub trait ModelBackend: Send + Sync {
    fn complete(
        &self,
        task: TaskName,
        instruction: &str,
        input: &str,
        params: &DecodingParams,
    ) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay_ms: 250 }
    }
}

fn default_api_key_env() -> String {
    "PRIVACHECK_API_KEY".to_string()
}

fn default_workers() -> usize {
    4
}

/// Remote backend configuration. The API key itself never appears here —
/// only the name of the environment variable holding it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub schema_version: crate::policy::SchemaVersion,
    pub endpoint: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    pub default_model: String,
    /// Per-task model overrides; tasks not listed use `default_model`.
    #[serde(default)]
    pub models: BTreeMap<TaskName, String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Directory of prompt template overrides; built-in templates otherwise.
    #[serde(default)]
    pub prompt_dir: Option<PathBuf>,
}

impl BackendConfig {
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model_for(&self, task: TaskName) -> &str {
        self.models.get(&task).map(String::as_str).unwrap_or(&self.default_model)
    }
}

/// Fixture-key hash: sha256 over the task code, a NUL separator, and the
/// canonical input payload. Hex-encoded, truncated to 16 chars for filenames.
pub fn fixture_key(task: TaskName, input: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(task.code().as_bytes());
    hasher.update([0u8]);
    hasher.update(input.as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    hex[..16].to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureRecord {
    task: TaskName,
    input: String,
    output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum FixtureFile {
    One(FixtureRecord),
    Many(Vec<FixtureRecord>),
}

/// Deterministic backend replaying recorded responses keyed by
/// `(task, input)` hash. Unknown inputs are an error, never a guess.
#[derive(Debug, Default, Clone)]
pub struct MockBackend {
    responses: HashMap<String, String>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load every `*.json` fixture in a directory. Each file holds one
    /// `{task, input, output}` record or an array of them; filenames are
    /// free-form.
    pub fn from_dir(dir: &Path) -> Result<Self, BackendError> {
        let mut backend = MockBackend::new();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| BackendError::Config(format!("cannot read {}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(|e| {
                BackendError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            let file: FixtureFile = serde_json::from_str(&text)
                .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
            let records = match file {
                FixtureFile::One(r) => vec![r],
                FixtureFile::Many(rs) => rs,
            };
            for r in records {
                backend.insert(r.task, &r.input, &r.output);
            }
        }
        Ok(backend)
    }

    pub fn insert(&mut self, task: TaskName, input: &str, output: &str) {
        self.responses.insert(fixture_key(task, input), output.to_string());
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    /// Write a fixture record under its canonical hashed filename.
    pub fn write_fixture(
        dir: &Path,
        task: TaskName,
        input: &str,
        output: &str,
    ) -> Result<PathBuf, BackendError> {
        let record = FixtureRecord {
            task,
            input: input.to_string(),
            output: output.to_string(),
        };
        let name = format!("{}__{}.json", task.code().to_lowercase(), fixture_key(task, input));
        let path = dir.join(name);
        let mut text = serde_json::to_string_pretty(&record)
            .map_err(|e| BackendError::Config(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text)
            .map_err(|e| BackendError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

impl ModelBackend for MockBackend {
    fn complete(
        &self,
        task: TaskName,
        _instruction: &str,
        input: &str,
        _params: &DecodingParams,
    ) -> Result<String, BackendError> {
        let key = fixture_key(task, input);
        self.responses
            .get(&key)
            .cloned()
            .ok_or(BackendError::MissingFixture { task, hash: key })
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

/// Remote chat-completions backend. The instruction goes in the system
/// message, the canonical payload in the user message.
#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    default_model: String,
    models: BTreeMap<TaskName, String>,
}

impl HttpBackend {
    /// Build from config, reading the credential from the configured
    /// environment variable. A missing key fails here, before any work.
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&cfg.api_key_env).map_err(|_| {
            BackendError::Auth(format!(
                "environment variable {} is not set; export the backend API key there \
                 (keys are never read from config files)",
                cfg.api_key_env
            ))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: cfg.endpoint.clone(),
            api_key,
            default_model: cfg.default_model.clone(),
            models: cfg.models.clone(),
        })
    }
}

impl ModelBackend for HttpBackend {
    fn complete(
        &self,
        task: TaskName,
        instruction: &str,
        input: &str,
        params: &DecodingParams,
    ) -> Result<String, BackendError> {
        let model = self.models.get(&task).map(String::as_str).unwrap_or(&self.default_model);
        let request = ChatRequest {
            model,
            messages: vec![
                ChatMessage { role: "system", content: instruction },
                ChatMessage { role: "user", content: input },
            ],
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&request)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(BackendError::Auth(format!("endpoint returned {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Transport(format!("endpoint returned {status}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| BackendError::Transport(format!("malformed response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport("response carried no choices".into()))
    }
}
