use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{fingerprint, ChatExchange, ChatProvider, EmbeddingProvider, Message, ProviderConfig, ProviderError, TokenUsage};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP surface the live providers and URL policy sources need.
pub trait HttpTransport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value, timeout: Duration) -> Result<HttpResponse, ProviderError>;
    fn get(&self, url: &str, timeout: Duration) -> Result<HttpResponse, ProviderError>;
}

#[derive(Default)]
pub struct ReqwestTransport {
    client: OnceLock<reqwest::blocking::Client>,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self::default()
    }

    // Built lazily: a blocking client must not be created on an async runtime thread.
    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(reqwest::blocking::Client::new)
    }

    fn map_err(e: reqwest::Error) -> ProviderError {
        if e.is_timeout() {
            ProviderError::Timeout
        } else {
            ProviderError::Transport(e.to_string())
        }
    }

    fn finish(resp: reqwest::blocking::Response) -> Result<HttpResponse, ProviderError> {
        let status = resp.status().as_u16();
        let body = resp.text().map_err(Self::map_err)?;
        Ok(HttpResponse { status, body })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value, timeout: Duration) -> Result<HttpResponse, ProviderError> {
        let mut req = self.client().post(url).timeout(timeout).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        Self::finish(req.send().map_err(Self::map_err)?)
    }

    fn get(&self, url: &str, timeout: Duration) -> Result<HttpResponse, ProviderError> {
        Self::finish(self.client().get(url).timeout(timeout).send().map_err(Self::map_err)?)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

fn real_sleep() -> Sleeper {
    Arc::new(std::thread::sleep)
}

fn classify(resp: HttpResponse) -> Result<Value, ProviderError> {
    match resp.status {
        200..=299 => serde_json::from_str(&resp.body).map_err(|e| ProviderError::MalformedResponse(e.to_string())),
        401 | 403 => Err(ProviderError::Auth(format!("HTTP {}", resp.status))),
        408 => Err(ProviderError::Timeout),
        429 => Err(ProviderError::RateLimited),
        status => Err(ProviderError::Http { status, body: resp.body }),
    }
}

struct Retrying {
    config: ProviderConfig,
    transport: Arc<dyn HttpTransport>,
    sleep: Sleeper,
    attempts: AtomicUsize,
}

impl Retrying {
    fn api_key(&self) -> Result<Option<String>, ProviderError> {
        if self.config.api_key_env.is_empty() {
            return Ok(None);
        }
        std::env::var(&self.config.api_key_env)
            .map(Some)
            .map_err(|_| ProviderError::Auth(format!("environment variable {} is not set", self.config.api_key_env)))
    }

    /// POSTs with exponential backoff on transient failures: `base`, `2·base`, ...
    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        self.config.validate()?;
        let key = self.api_key()?;
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let mut attempt = 0u32;
        loop {
            self.attempts.fetch_add(1, Ordering::SeqCst);
            let result = self
                .transport
                .post_json(&url, key.as_deref(), body, self.config.timeout)
                .and_then(classify);
            match result {
                Err(e) if e.is_transient() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_base.saturating_mul(1 << attempt.min(16));
                    tracing::warn!(url = %url, attempt, error = %e, "transient provider failure, retrying");
                    (self.sleep)(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Chat provider for OpenAI-compatible `/chat/completions` endpoints.
pub struct HttpChatProvider {
    inner: Retrying,
}

impl HttpChatProvider {
    pub fn new(config: ProviderConfig, transport: Arc<dyn HttpTransport>) -> Self {
        Self::with_sleeper(config, transport, real_sleep())
    }

    pub fn with_sleeper(config: ProviderConfig, transport: Arc<dyn HttpTransport>, sleep: Sleeper) -> Self {
        Self { inner: Retrying { config, transport, sleep, attempts: AtomicUsize::new(0) } }
    }

    /// Total HTTP attempts made, retries included.
    pub fn attempts(&self) -> usize {
        self.inner.attempts.load(Ordering::SeqCst)
    }
}

impl ChatProvider for HttpChatProvider {
    fn model_name(&self) -> &str {
        &self.inner.config.model_name
    }

    fn chat(&self, messages: &[Message]) -> Result<ChatExchange, ProviderError> {
        if messages.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let body = json!({
            "model": self.inner.config.model_name,
            "messages": messages,
            "temperature": self.inner.config.temperature,
        });
        let started = Instant::now();
        let value = self.inner.post("chat/completions", &body)?;
        let latency = started.elapsed();
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::MalformedResponse("missing choices[0].message.content".into()))?;
        let token_usage = value.get("usage").map(|u| TokenUsage {
            prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
        });
        Ok(ChatExchange {
            model_name: self.inner.config.model_name.clone(),
            fingerprint: fingerprint(&self.inner.config.model_name, messages),
            messages: messages.to_vec(),
            response_text: text.to_string(),
            latency,
            token_usage,
        })
    }
}

/// Embedding provider for OpenAI-compatible `/embeddings` endpoints.
pub struct HttpEmbeddingProvider {
    inner: Retrying,
    dimension: usize,
    embedder_id: String,
}

impl HttpEmbeddingProvider {
    pub fn new(config: ProviderConfig, dimension: usize, transport: Arc<dyn HttpTransport>) -> Self {
        Self::with_sleeper(config, dimension, transport, real_sleep())
    }

    pub fn with_sleeper(config: ProviderConfig, dimension: usize, transport: Arc<dyn HttpTransport>, sleep: Sleeper) -> Self {
        let embedder_id = format!("{}:d{}", config.model_name, dimension);
        Self { inner: Retrying { config, transport, sleep, attempts: AtomicUsize::new(0) }, dimension, embedder_id }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let body = json!({ "model": self.inner.config.model_name, "input": texts });
        let value = self.inner.post("embeddings", &body)?;
        let data = value
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::MalformedResponse("missing data array".into()))?;
        let mut indexed = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map(|i| i as usize).unwrap_or(pos);
            let vector: Vec<f32> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| ProviderError::MalformedResponse("missing embedding".into()))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<_>>()
                .ok_or_else(|| ProviderError::MalformedResponse("non-numeric embedding component".into()))?;
            if vector.len() != self.dimension {
                return Err(ProviderError::DimensionMismatch { expected: self.dimension, actual: vector.len() });
            }
            indexed.push((index, vector));
        }
        indexed.sort_by_key(|(i, _)| *i);
        Ok(indexed.into_iter().map(|(_, v)| v).collect())
    }
}
