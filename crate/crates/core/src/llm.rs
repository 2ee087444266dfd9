//! Chat-completion bridge shared by the simulator, the call writer, the
//! agent driver and every judge.
//!
//! [`LlmBridge`] wraps a [`ChatProvider`] with retries, an in-flight limit,
//! an append-only audit log (one entry per attempt) and an optional
//! record/replay store keyed by a digest of the full request.

use std::collections::{HashMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;
use tracing::warn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub model_name: String,
    pub temperature: f64,
}

impl ChatRequest {
    /// Hex SHA-256 over (system, user, model_name, temperature).
    pub fn digest(&self) -> String {
        let material = serde_json::to_vec(&(
            &self.system,
            &self.user,
            &self.model_name,
            self.temperature,
        ))
        .expect("request serialization is infallible");
        hex::encode(Sha256::digest(&material))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub text: String,
    pub usage: Usage,
}

impl ChatReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: Usage::default(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    /// Worth retrying: timeouts, dropped connections, 429/5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider rejected credentials: {0}")]
    Auth(String),
    /// Well-formed refusal that will not change on retry.
    #[error("provider rejected request: {0}")]
    Rejected(String),
}

#[async_trait]
pub trait ChatProvider: Send + Sync {
    async fn chat(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError>;
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BridgeError {
    #[error("llm unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("llm credentials rejected: {0}")]
    Auth(String),
    #[error("llm rejected request: {0}")]
    Rejected(String),
}

/// One attempt, as recorded in the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system: String,
    pub user: String,
    pub model_name: String,
    pub temperature: f64,
    pub completion: String,
    pub usage: Usage,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub replayed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayMode {
    /// Always call the provider.
    #[default]
    Off,
    /// Serve recorded completions; record the rest.
    RecordReplay,
    /// Serve recorded completions; a miss is an error.
    ReplayOnly,
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub retry_budget: u32,
    pub initial_backoff: Duration,
    pub max_in_flight: usize,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            retry_budget: 3,
            initial_backoff: Duration::from_millis(250),
            max_in_flight: 8,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ReplayEntry {
    digest: String,
    model_name: String,
    completion: String,
}

struct ReplayStore {
    mode: ReplayMode,
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, String>>,
}

impl ReplayStore {
    fn load(mode: ReplayMode, path: Option<PathBuf>) -> io::Result<Self> {
        let mut entries = HashMap::new();
        if let Some(p) = path.as_deref().filter(|p| p.exists()) {
            for line in BufReader::new(File::open(p)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: ReplayEntry = serde_json::from_str(&line)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                entries.entry(e.digest).or_insert(e.completion);
            }
        }
        Ok(Self {
            mode,
            path,
            entries: Mutex::new(entries),
        })
    }

    fn record(&self, digest: String, model_name: &str, completion: &str) {
        let mut entries = self.entries.lock();
        if entries.contains_key(&digest) {
            return;
        }
        if let Some(p) = &self.path {
            let line = serde_json::to_string(&ReplayEntry {
                digest: digest.clone(),
                model_name: model_name.to_string(),
                completion: completion.to_string(),
            })
            .expect("replay entry serialization is infallible");
            if let Err(e) = append_line(p, &line) {
                warn!(path = %p.display(), error = %e, "failed to persist replay entry");
            }
        }
        entries.insert(digest, completion.to_string());
    }
}

fn append_line(path: &Path, line: &str) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")
}

pub struct LlmBridge {
    provider: Arc<dyn ChatProvider>,
    config: BridgeConfig,
    in_flight: Semaphore,
    audit: Mutex<Vec<ChatExchange>>,
    audit_path: Option<PathBuf>,
    replay: Option<ReplayStore>,
}

impl LlmBridge {
    pub fn new(provider: Arc<dyn ChatProvider>, config: BridgeConfig) -> Self {
        Self {
            provider,
            in_flight: Semaphore::new(config.max_in_flight.max(1)),
            config,
            audit: Mutex::new(Vec::new()),
            audit_path: None,
            replay: None,
        }
    }

    /// Bridge with default settings and no backoff delay; handy for stubs.
    pub fn immediate(provider: impl ChatProvider + 'static) -> Self {
        Self::new(
            Arc::new(provider),
            BridgeConfig {
                initial_backoff: Duration::ZERO,
                ..BridgeConfig::default()
            },
        )
    }

    /// Also append every audit entry to this newline-delimited JSON file.
    pub fn with_audit_file(mut self, path: impl Into<PathBuf>) -> Self {
        self.audit_path = Some(path.into());
        self
    }

    pub fn with_replay(mut self, mode: ReplayMode, path: Option<PathBuf>) -> io::Result<Self> {
        self.replay = match mode {
            ReplayMode::Off => None,
            m => Some(ReplayStore::load(m, path)?),
        };
        Ok(self)
    }

    pub fn audit_log(&self) -> Vec<ChatExchange> {
        self.audit.lock().clone()
    }

    pub fn audit_len(&self) -> usize {
        self.audit.lock().len()
    }

    fn log(&self, exchange: ChatExchange) {
        if let Some(p) = &self.audit_path {
            let line = serde_json::to_string(&exchange).expect("audit serialization is infallible");
            if let Err(e) = append_line(p, &line) {
                warn!(path = %p.display(), error = %e, "failed to write audit log");
            }
        }
        self.audit.lock().push(exchange);
    }

    pub async fn complete(
        &self,
        system: &str,
        user: &str,
        model_name: &str,
        temperature: f64,
    ) -> Result<String, BridgeError> {
        let request = ChatRequest {
            system: system.to_string(),
            user: user.to_string(),
            model_name: model_name.to_string(),
            temperature,
        };
        let exchange = |completion: String, usage: Usage, attempt: u32, error: Option<String>, replayed: bool| {
            ChatExchange {
                system: request.system.clone(),
                user: request.user.clone(),
                model_name: request.model_name.clone(),
                temperature,
                completion,
                usage,
                attempt,
                error,
                replayed,
            }
        };

        let digest = self.replay.as_ref().map(|_| request.digest());
        if let (Some(store), Some(d)) = (&self.replay, &digest) {
            let hit = store.entries.lock().get(d).cloned();
            if let Some(text) = hit {
                self.log(exchange(text.clone(), Usage::default(), 0, None, true));
                return Ok(text);
            }
            if store.mode == ReplayMode::ReplayOnly {
                return Err(BridgeError::Unavailable {
                    attempts: 0,
                    last: format!("no recorded completion for digest {d}"),
                });
            }
        }

        let _permit = self.in_flight.acquire().await.expect("semaphore never closed");
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 0..=self.config.retry_budget {
            if attempt > 0 && !backoff.is_zero() {
                tokio::time::sleep(backoff).await;
                backoff *= 2;
            }
            match self.provider.chat(&request).await {
                Ok(reply) => {
                    self.log(exchange(reply.text.clone(), reply.usage, attempt, None, false));
                    if let (Some(store), Some(d)) = (&self.replay, digest) {
                        store.record(d, model_name, &reply.text);
                    }
                    return Ok(reply.text);
                }
                Err(e) => {
                    self.log(exchange(String::new(), Usage::default(), attempt, Some(e.to_string()), false));
                    match e {
                        ProviderError::Auth(m) => return Err(BridgeError::Auth(m)),
                        ProviderError::Rejected(m) => return Err(BridgeError::Rejected(m)),
                        ProviderError::Transient(m) => last = m,
                    }
                }
            }
        }
        Err(BridgeError::Unavailable {
            attempts: self.config.retry_budget + 1,
            last,
        })
    }
}

/// A bridge bound to one model name and temperature.
#[derive(Clone)]
pub struct ChatModel {
    pub label: String,
    pub model_name: String,
    pub temperature: f64,
    pub bridge: Arc<LlmBridge>,
}

impl ChatModel {
    pub fn new(bridge: Arc<LlmBridge>, model_name: impl Into<String>, temperature: f64) -> Self {
        let model_name = model_name.into();
        Self {
            label: model_name.clone(),
            model_name,
            temperature,
            bridge,
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub async fn complete(&self, system: &str, user: &str) -> Result<String, BridgeError> {
        self.bridge
            .complete(system, user, &self.model_name, self.temperature)
            .await
    }
}

/// OpenAI-compatible `/chat/completions` endpoint.
pub struct OpenAiCompatProvider {
    client: reqwest::Client,
    endpoint: String,
    api_key: String,
}

impl OpenAiCompatProvider {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        Self {
            client: reqwest::Client::builder()
                .timeout(timeout)
                .build()
                .expect("http client construction"),
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
        }
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[async_trait]
impl ChatProvider for OpenAiCompatProvider {
    async fn chat(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError> {
        let body = serde_json::json!({
            "model": request.model_name,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        });
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.endpoint))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .await
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(ProviderError::Auth(format!("{status}: {text}"))),
            408 | 429 | 500..=599 => return Err(ProviderError::Transient(format!("{status}: {text}"))),
            _ => return Err(ProviderError::Rejected(format!("{status}: {text}"))),
        }
        let parsed: CompletionBody = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Transient(format!("unparseable completion body: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let usage = parsed
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(ChatReply {
            text: content,
            usage,
        })
    }
}

/// Deterministic providers for tests, examples and offline smoke runs.
pub mod stub {
    use super::*;

    /// Replies with the user text.
    pub struct EchoProvider;

    #[async_trait]
    impl ChatProvider for EchoProvider {
        async fn chat(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError> {
            Ok(ChatReply::text(request.user.clone()))
        }
    }

    /// Plays back a fixed sequence of outcomes. When `cycle` is set the
    /// sequence repeats; otherwise an exhausted script fails transiently.
    pub struct ScriptedProvider {
        script: Vec<Result<String, ProviderError>>,
        cursor: Mutex<usize>,
        cycle: bool,
    }

    impl ScriptedProvider {
        pub fn new(script: Vec<Result<String, ProviderError>>) -> Self {
            Self {
                script,
                cursor: Mutex::new(0),
                cycle: false,
            }
        }

        pub fn replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
            Self::new(replies.into_iter().map(|r| Ok(r.into())).collect())
        }

        pub fn cycling(mut self) -> Self {
            self.cycle = true;
            self
        }

        pub fn calls(&self) -> usize {
            *self.cursor.lock()
        }
    }

    #[async_trait]
    impl ChatProvider for ScriptedProvider {
        async fn chat(&self, _request: &ChatRequest) -> Result<ChatReply, ProviderError> {
            let mut cursor = self.cursor.lock();
            let idx = *cursor;
            *cursor += 1;
            let slot = if self.cycle && !self.script.is_empty() {
                self.script.get(idx % self.script.len())
            } else {
                self.script.get(idx)
            };
            match slot {
                Some(Ok(text)) => Ok(ChatReply::text(text.clone())),
                Some(Err(e)) => Err(e.clone()),
                None => Err(ProviderError::Transient("script exhausted".into())),
            }
        }
    }

    type ReplyFn = dyn Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync;

    /// Computes each reply from the request.
    pub struct FnProvider(Box<ReplyFn>);

    impl FnProvider {
        pub fn new(
            f: impl Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
        ) -> Self {
            Self(Box::new(f))
        }
    }

    #[async_trait]
    impl ChatProvider for FnProvider {
        async fn chat(&self, request: &ChatRequest) -> Result<ChatReply, ProviderError> {
            (self.0)(request).map(ChatReply::text)
        }
    }

    /// Bridge with no backoff around a scripted list of replies.
    pub fn scripted_bridge<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Arc<LlmBridge> {
        Arc::new(LlmBridge::immediate(ScriptedProvider::replies(replies)))
    }

    pub fn fn_bridge(
        f: impl Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    ) -> Arc<LlmBridge> {
        Arc::new(LlmBridge::immediate(FnProvider::new(f)))
    }

    /// Queue-backed provider whose script can be extended after construction.
    #[derive(Default)]
    pub struct QueueProvider {
        queue: Mutex<VecDeque<Result<String, ProviderError>>>,
    }

    impl QueueProvider {
        pub fn push(&self, reply: Result<String, ProviderError>) {
            self.queue.lock().push_back(reply);
        }
    }

    #[async_trait]
    impl ChatProvider for QueueProvider {
        async fn chat(&self, _request: &ChatRequest) -> Result<ChatReply, ProviderError> {
            match self.queue.lock().pop_front() {
                Some(r) => r.map(ChatReply::text),
                None => Err(ProviderError::Transient("queue empty".into())),
            }
        }
    }
}
