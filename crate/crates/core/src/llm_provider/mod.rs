//! Chat-completion and embedding providers.
//!
//! Live providers speak the common hosted-model JSON protocol over HTTP.
//! Scripted, recording and replaying providers make every agent path
//! testable offline and reproducible from a transcript file.

mod http;
mod mock;
mod transcript;

pub use http::{HttpChatProvider, HttpEmbeddingProvider, HttpResponse, HttpTransport, ReqwestTransport, Sleeper};
pub use mock::{MockEmbedder, ScriptedProvider};
pub use transcript::{RecordingProvider, ReplayProvider, Transcript, TranscriptRecord};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{duration_secs, sha256_hex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub model_name: String,
    pub fingerprint: String,
    pub messages: Vec<Message>,
    pub response_text: String,
    #[serde(with = "duration_secs")]
    pub latency: Duration,
    pub token_usage: Option<TokenUsage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key; empty for none.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(with = "duration_secs", default = "default_timeout")]
    pub timeout: Duration,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(with = "duration_secs", default = "default_backoff")]
    pub backoff_base: Duration,
}

fn default_timeout() -> Duration {
    Duration::from_secs(120)
}

fn default_retries() -> u32 {
    2
}

fn default_backoff() -> Duration {
    Duration::from_millis(500)
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env: String::new(),
            timeout: default_timeout(),
            temperature: 0.0,
            max_retries: default_retries(),
            backoff_base: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.temperature >= 0.0) {
            return Err(ProviderError::InvalidConfig(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.timeout.is_zero() {
            return Err(ProviderError::InvalidConfig("timeout must be > 0".into()));
        }
        if self.model_name.is_empty() {
            return Err(ProviderError::InvalidConfig("model_name is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request timed out")]
    Timeout,
    #[error("rate limited by provider")]
    RateLimited,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("no recorded exchange for fingerprint {0}")]
    MissingTranscript(String),
    #[error("corrupt transcript: {0}")]
    CorruptTranscript(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error("scripted provider has no response left")]
    ScriptExhausted,
    #[error("I/O error: {0}")]
    Io(String),
}

impl ProviderError {
    /// Errors worth another attempt after backing off.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Timeout | ProviderError::RateLimited | ProviderError::Transport(_) => true,
            ProviderError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn model_name(&self) -> &str;
    fn chat(&self, messages: &[Message]) -> Result<ChatExchange, ProviderError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn embedder_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

impl<T: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<T> {
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn chat(&self, messages: &[Message]) -> Result<ChatExchange, ProviderError> {
        (**self).chat(messages)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn embedder_id(&self) -> &str {
        (**self).embedder_id()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        (**self).embed(texts)
    }
}

/// Stable request identity: SHA-256 over the model name and the JSON
/// encoding of the message sequence.
pub fn fingerprint(model_name: &str, messages: &[Message]) -> String {
    let body = serde_json::to_string(&(model_name, messages)).expect("messages serialize");
    sha256_hex(body)
}

/// Embeds `texts` and checks every vector against the provider's declared dimension.
pub fn embed_checked(provider: &dyn EmbeddingProvider, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::EmptyInput);
    }
    let vectors = provider.embed(texts)?;
    if vectors.len() != texts.len() {
        return Err(ProviderError::MalformedResponse(format!(
            "expected {} vectors, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    for v in &vectors {
        if v.len() != provider.dimension() {
            return Err(ProviderError::DimensionMismatch { expected: provider.dimension(), actual: v.len() });
        }
    }
    Ok(vectors)
}
