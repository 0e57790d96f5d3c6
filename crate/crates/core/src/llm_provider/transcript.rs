use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{fingerprint, ChatExchange, ChatProvider, Message, ProviderError};
use crate::digest::sha256_hex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub fingerprint: String,
    pub model: String,
    pub messages: Vec<Message>,
    pub response_text: String,
    pub latency_ms: f64,
}

impl TranscriptRecord {
    pub fn from_exchange(ex: &ChatExchange) -> Self {
        Self {
            fingerprint: ex.fingerprint.clone(),
            model: ex.model_name.clone(),
            messages: ex.messages.clone(),
            response_text: ex.response_text.clone(),
            latency_ms: ex.latency.as_secs_f64() * 1000.0,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ChecksumLine {
    checksum: String,
}

/// Ordered list of recorded exchanges.
///
/// On disk: one JSON record per line, then a `{"checksum": ...}` line holding
/// the SHA-256 of all record lines (each including its newline).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn new(records: Vec<TranscriptRecord>) -> Self {
        Self { records }
    }

    pub fn to_jsonl(&self) -> String {
        let mut body = String::new();
        for r in &self.records {
            body.push_str(&serde_json::to_string(r).expect("record serializes"));
            body.push('\n');
        }
        let footer = serde_json::to_string(&ChecksumLine { checksum: sha256_hex(&body) }).unwrap();
        body.push_str(&footer);
        body.push('\n');
        body
    }

    pub fn parse(text: &str) -> Result<Self, ProviderError> {
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        let Some((last, records)) = lines.split_last() else {
            return Err(ProviderError::CorruptTranscript("empty file".into()));
        };
        let footer: ChecksumLine = serde_json::from_str(last.trim_end())
            .map_err(|_| ProviderError::CorruptTranscript("missing checksum line".into()))?;
        let body: String = records.concat();
        if sha256_hex(&body) != footer.checksum {
            return Err(ProviderError::CorruptTranscript("checksum mismatch".into()));
        }
        let records = records
            .iter()
            .enumerate()
            .map(|(i, line)| {
                serde_json::from_str(line.trim_end())
                    .map_err(|e| ProviderError::CorruptTranscript(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProviderError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProviderError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| ProviderError::Io(format!("{}: {e}", path.display())))
    }
}

/// Wraps a provider and keeps every successful exchange.
pub struct RecordingProvider<P> {
    inner: P,
    transcript: Mutex<Transcript>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, transcript: Mutex::new(Transcript::default()) }
    }

    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().unwrap().clone()
    }

    pub fn save(&self, path: &Path) -> Result<(), ProviderError> {
        self.transcript().save(path)
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn chat(&self, messages: &[Message]) -> Result<ChatExchange, ProviderError> {
        let ex = self.inner.chat(messages)?;
        self.transcript.lock().unwrap().records.push(TranscriptRecord::from_exchange(&ex));
        Ok(ex)
    }
}

/// Serves recorded responses by request fingerprint.
///
/// Records sharing a fingerprint are served in file order; once they run out
/// the last one keeps being served. Reported latency is the recorded latency
/// times `latency_scale`.
pub struct ReplayProvider {
    model_name: String,
    by_fingerprint: HashMap<String, Vec<TranscriptRecord>>,
    cursor: Mutex<HashMap<String, usize>>,
    latency_scale: f64,
    calls: AtomicUsize,
}

impl ReplayProvider {
    pub fn new(model_name: impl Into<String>, transcript: Transcript) -> Self {
        let mut by_fingerprint: HashMap<String, Vec<TranscriptRecord>> = HashMap::new();
        for r in transcript.records {
            by_fingerprint.entry(r.fingerprint.clone()).or_default().push(r);
        }
        Self {
            model_name: model_name.into(),
            by_fingerprint,
            cursor: Mutex::new(HashMap::new()),
            latency_scale: 1.0,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn load(model_name: impl Into<String>, path: &Path) -> Result<Self, ProviderError> {
        Ok(Self::new(model_name, Transcript::load(path)?))
    }

    pub fn with_latency_scale(mut self, scale: f64) -> Self {
        self.latency_scale = scale.max(0.0);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for ReplayProvider {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn chat(&self, messages: &[Message]) -> Result<ChatExchange, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fp = fingerprint(&self.model_name, messages);
        let records = self.by_fingerprint.get(&fp).ok_or_else(|| ProviderError::MissingTranscript(fp.clone()))?;
        let idx = {
            let mut cursor = self.cursor.lock().unwrap();
            let c = cursor.entry(fp.clone()).or_insert(0);
            let idx = (*c).min(records.len() - 1);
            *c += 1;
            idx
        };
        let rec = &records[idx];
        Ok(ChatExchange {
            model_name: self.model_name.clone(),
            fingerprint: fp,
            messages: messages.to_vec(),
            response_text: rec.response_text.clone(),
            latency: Duration::from_secs_f64((rec.latency_ms * self.latency_scale / 1000.0).max(0.0)),
            token_usage: None,
        })
    }
}
