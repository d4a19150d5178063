//! Uniform access to text and vision chat-completion backends.
//!
//! Two backends sit behind [`Gateway`]: an OpenAI-compatible HTTP client and a
//! scripted backend that answers from a fixed table of substring matchers. The
//! scripted backend makes every pipeline stage runnable offline.

mod remote;
mod scripted;

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::RemoteClient;
pub use scripted::{ScriptEntry, ScriptedResponses};

/// Upper bound on the summed size of all image attachments in one call.
pub const MAX_ATTACHMENT_BYTES: usize = 8 * 1024 * 1024;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    #[error("backend rejected request with status {status}: {body}")]
    BadRequest { status: u16, body: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("vision request carries no image attachment")]
    MissingImage,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAttachment {
    pub mime: String,
    pub data: Vec<u8>,
}

impl ImageAttachment {
    pub fn png(data: Vec<u8>) -> Self {
        Self {
            mime: "image/png".to_string(),
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    pub images: Vec<ImageAttachment>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user_with_images(text: impl Into<String>, images: Vec<ImageAttachment>) -> Self {
        Self {
            role: Role::User,
            text: text.into(),
            images,
        }
    }
}

/// Text a scripted backend matches against: every message body, in order,
/// separated by a blank line.
pub fn assembled_prompt(messages: &[ChatMessage]) -> String {
    messages
        .iter()
        .map(|m| m.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Scripted,
}

fn default_timeout() -> Duration {
    Duration::from_secs(60)
}
fn default_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_timeout", with = "duration_secs")]
    pub timeout: Duration,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
    /// Base of the retry schedule `base * 2^attempt`, jittered by ±20%.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f32>,
    /// Never written back out; read from config or `AST_LLM_API_KEY`.
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

impl BackendConfig {
    pub fn scripted() -> Self {
        Self {
            kind: BackendKind::Scripted,
            base_url: None,
            model_id: "scripted".to_string(),
            timeout: default_timeout(),
            max_retries: default_retries(),
            max_concurrent: default_concurrency(),
            backoff_base_ms: default_backoff_ms(),
            temperature: None,
            api_key: None,
        }
    }

    pub fn remote(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            base_url: Some(base_url.into()),
            model_id: model_id.into(),
            ..Self::scripted()
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.kind == BackendKind::Remote
            && self.base_url.as_deref().is_none_or(|u| u.trim().is_empty())
        {
            return Err(LlmError::InvalidConfig(
                "remote backend requires a non-empty base_url".into(),
            ));
        }
        if self.max_retries > 10 {
            return Err(LlmError::InvalidConfig(format!(
                "max_retries must be <= 10, got {}",
                self.max_retries
            )));
        }
        if self.max_concurrent == 0 {
            return Err(LlmError::InvalidConfig(
                "max_concurrent must be positive".into(),
            ));
        }
        Ok(())
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        if !(secs.is_finite() && secs > 0.0) {
            return Err(serde::de::Error::custom("timeout must be a positive number of seconds"));
        }
        Ok(Duration::from_secs_f64(secs))
    }
}

enum Backend {
    Scripted(ScriptedResponses),
    Remote(RemoteClient),
}

/// Counting semaphore bounding in-flight calls.
struct Limiter {
    max: usize,
    state: Mutex<LimiterState>,
    cond: Condvar,
}

#[derive(Default)]
struct LimiterState {
    in_flight: usize,
    peak: usize,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max,
            state: Mutex::new(LimiterState::default()),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while st.in_flight >= self.max {
            st = self.cond.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st.in_flight += 1;
        st.peak = st.peak.max(st.in_flight);
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock().unwrap_or_else(|e| e.into_inner());
        st.in_flight -= 1;
        self.0.cond.notify_one();
    }
}

/// Shareable handle to one chat backend.
pub struct Gateway {
    config: BackendConfig,
    backend: Backend,
    limiter: Limiter,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("kind", &self.config.kind)
            .field("model_id", &self.config.model_id)
            .field("base_url", &self.config.base_url)
            .finish()
    }
}

impl Gateway {
    pub fn scripted(responses: ScriptedResponses) -> Self {
        let config = BackendConfig::scripted();
        Self {
            limiter: Limiter::new(config.max_concurrent),
            config,
            backend: Backend::Scripted(responses),
        }
    }

    pub fn remote(config: BackendConfig) -> Result<Self, LlmError> {
        config.validate()?;
        if config.kind != BackendKind::Remote {
            return Err(LlmError::InvalidConfig("expected a remote backend config".into()));
        }
        let client = RemoteClient::new(&config)?;
        Ok(Self {
            limiter: Limiter::new(config.max_concurrent),
            config,
            backend: Backend::Remote(client),
        })
    }

    /// Builds the backend named by `config.kind`; scripted configs need a table.
    pub fn from_config(
        config: BackendConfig,
        scripted: Option<ScriptedResponses>,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        match config.kind {
            BackendKind::Remote => Self::remote(config),
            BackendKind::Scripted => {
                let responses = scripted.ok_or_else(|| {
                    LlmError::InvalidConfig("scripted backend requires a response table".into())
                })?;
                Ok(Self {
                    limiter: Limiter::new(config.max_concurrent),
                    config,
                    backend: Backend::Scripted(responses),
                })
            }
        }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Highest number of calls observed in flight at once.
    pub fn peak_in_flight(&self) -> usize {
        self.limiter.state.lock().unwrap_or_else(|e| e.into_inner()).peak
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        check_messages(messages)?;
        if messages.iter().any(|m| !m.images.is_empty()) {
            return Err(LlmError::InvalidRequest(
                "text completion does not accept image attachments".into(),
            ));
        }
        let _permit = self.limiter.acquire();
        self.dispatch(messages)
    }

    pub fn complete_vision(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        check_messages(messages)?;
        let images: Vec<&ImageAttachment> = messages.iter().flat_map(|m| &m.images).collect();
        if images.is_empty() {
            return Err(LlmError::MissingImage);
        }
        let total: usize = images.iter().map(|i| i.data.len()).sum();
        if total > MAX_ATTACHMENT_BYTES {
            return Err(LlmError::InvalidRequest(format!(
                "attachments total {total} bytes, limit is {MAX_ATTACHMENT_BYTES}"
            )));
        }
        for img in &images {
            if img.mime != "image/png" || !img.data.starts_with(&PNG_SIGNATURE) {
                return Err(LlmError::InvalidRequest(
                    "only PNG attachments are supported".into(),
                ));
            }
        }
        let _permit = self.limiter.acquire();
        self.dispatch(messages)
    }

    /// Embedding vector for `text` from the remote `/embeddings` endpoint.
    pub fn embed(&self, text: &str) -> Result<Vec<f32>, LlmError> {
        match &self.backend {
            Backend::Remote(client) => {
                let _permit = self.limiter.acquire();
                client.embed(&self.config, text)
            }
            Backend::Scripted(_) => Err(LlmError::InvalidConfig(
                "scripted backend has no embedding endpoint".into(),
            )),
        }
    }

    fn dispatch(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        match &self.backend {
            Backend::Scripted(table) => Ok(table.respond(&assembled_prompt(messages)).to_string()),
            Backend::Remote(client) => client.chat(&self.config, messages),
        }
    }
}

fn check_messages(messages: &[ChatMessage]) -> Result<(), LlmError> {
    if messages.is_empty() {
        return Err(LlmError::InvalidRequest("no messages".into()));
    }
    if messages
        .iter()
        .any(|m| m.role != Role::User && !m.images.is_empty())
    {
        return Err(LlmError::InvalidRequest(
            "images are only permitted on user messages".into(),
        ));
    }
    Ok(())
}
