//! Watches specification sources by content hash and reports new, updated
//! and removed documents.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{duration_secs, sha256_hex};
use crate::llm_provider::{HttpTransport, Sleeper};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceLocation {
    Directory { path: PathBuf },
    UrlList { urls: Vec<String> },
}

fn default_poll_interval() -> Duration {
    Duration::from_secs(6 * 3600)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySource {
    pub source_id: String,
    #[serde(flatten)]
    pub location: SourceLocation,
    #[serde(with = "duration_secs", default = "default_poll_interval")]
    pub poll_interval: Duration,
}

impl PolicySource {
    pub fn directory(source_id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            source_id: source_id.into(),
            location: SourceLocation::Directory { path: path.into() },
            poll_interval: default_poll_interval(),
        }
    }

    pub fn urls(source_id: impl Into<String>, urls: Vec<String>) -> Self {
        Self { source_id: source_id.into(), location: SourceLocation::UrlList { urls }, poll_interval: default_poll_interval() }
    }

    pub fn validate(&self) -> Result<(), HubError> {
        if self.poll_interval < Duration::from_secs(1) {
            return Err(HubError::InvalidSource(format!("{}: poll_interval must be at least 1s", self.source_id)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChangeKind {
    New,
    Updated,
    Removed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub source_id: String,
    pub filename: String,
    pub change: ChangeKind,
    pub old_hash: Option<String>,
    pub new_hash: Option<String>,
    pub detected_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HubError {
    #[error("source {source_id} unavailable: {message}")]
    SourceUnavailable { source_id: String, message: String },
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("I/O error: {0}")]
    Io(String),
}

/// Filename to hex SHA-256 of the document text.
pub type Snapshot = BTreeMap<String, String>;

pub trait Fetcher: Send + Sync {
    fn fetch(&self, url: &str) -> Result<String, String>;
}

/// HTTPS GET through an [`HttpTransport`]; the body is the document text.
pub struct HttpFetcher {
    transport: Arc<dyn HttpTransport>,
    timeout: Duration,
}

impl HttpFetcher {
    pub fn new(transport: Arc<dyn HttpTransport>, timeout: Duration) -> Self {
        Self { transport, timeout }
    }
}

impl Fetcher for HttpFetcher {
    fn fetch(&self, url: &str) -> Result<String, String> {
        let resp = self.transport.get(url, self.timeout).map_err(|e| e.to_string())?;
        if (200..300).contains(&resp.status) {
            Ok(resp.body)
        } else {
            Err(format!("HTTP {}", resp.status))
        }
    }
}

/// Document name for a URL: its last non-empty path segment.
pub fn url_filename(url: &str) -> String {
    let no_query = url.split(['?', '#']).next().unwrap_or(url);
    no_query
        .trim_end_matches('/')
        .rsplit('/')
        .next()
        .filter(|s| !s.is_empty() && !s.contains(':'))
        .map(str::to_string)
        .unwrap_or_else(|| format!("url-{}", &sha256_hex(url)[..12]))
}

fn read_directory(dir: &Path) -> Result<BTreeMap<String, String>, String> {
    let mut docs = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let is_doc = path.is_file() && matches!(path.extension().and_then(|x| x.to_str()), Some("txt" | "md"));
        if !is_doc {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        docs.insert(path.file_name().unwrap().to_string_lossy().into_owned(), text);
    }
    Ok(docs)
}

/// Current documents of a source, by filename.
pub fn fetch_documents(source: &PolicySource, fetcher: &dyn Fetcher) -> Result<BTreeMap<String, String>, HubError> {
    let unavailable = |message: String| HubError::SourceUnavailable { source_id: source.source_id.clone(), message };
    match &source.location {
        SourceLocation::Directory { path } => read_directory(path).map_err(unavailable),
        SourceLocation::UrlList { urls } => {
            let mut docs = BTreeMap::new();
            for url in urls {
                let body = fetcher.fetch(url).map_err(|e| unavailable(format!("{url}: {e}")))?;
                docs.insert(url_filename(url), body);
            }
            Ok(docs)
        }
    }
}

pub fn snapshot(source: &PolicySource, fetcher: &dyn Fetcher) -> Result<Snapshot, HubError> {
    Ok(fetch_documents(source, fetcher)?.into_iter().map(|(k, v)| (k, sha256_hex(v))).collect())
}

/// Set difference of two snapshots, sorted by filename.
pub fn diff_snapshots(source_id: &str, before: &Snapshot, after: &Snapshot, detected_at: DateTime<Utc>) -> Vec<ChangeEvent> {
    let names: BTreeSet<&String> = before.keys().chain(after.keys()).collect();
    names
        .into_iter()
        .filter_map(|name| {
            let (old, new) = (before.get(name), after.get(name));
            let change = match (old, new) {
                (None, Some(_)) => ChangeKind::New,
                (Some(_), None) => ChangeKind::Removed,
                (Some(a), Some(b)) if a != b => ChangeKind::Updated,
                _ => return None,
            };
            Some(ChangeEvent {
                source_id: source_id.to_string(),
                filename: name.clone(),
                change,
                old_hash: old.cloned(),
                new_hash: new.cloned(),
                detected_at,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubState {
    pub baselines: BTreeMap<String, Snapshot>,
    /// `source_id/filename` with the new hash, or `removed:` plus the old hash.
    pub emitted: BTreeSet<(String, String)>,
}

impl HubState {
    pub fn load(path: &Path) -> Result<Self, HubError> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| HubError::Io(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(HubError::Io(format!("{}: {e}", path.display()))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), HubError> {
        let text = serde_json::to_string_pretty(self).expect("state serializes");
        std::fs::write(path, text).map_err(|e| HubError::Io(format!("{}: {e}", path.display())))
    }
}

fn event_key(e: &ChangeEvent) -> (String, String) {
    let doc = format!("{}/{}", e.source_id, e.filename);
    match (&e.change, &e.new_hash, &e.old_hash) {
        (ChangeKind::Removed, _, Some(old)) => (doc, format!("removed:{old}")),
        (_, Some(new), _) => (doc, new.clone()),
        _ => (doc, String::new()),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PollReport {
    pub delivered: Vec<ChangeEvent>,
    /// Events whose callback kept failing; they are offered again next poll.
    pub failed: Vec<(ChangeEvent, String)>,
    pub source_errors: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "duration_secs")]
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_secs(1) }
    }
}

pub struct PolicyHub {
    sources: Vec<PolicySource>,
    state: HubState,
    fetcher: Arc<dyn Fetcher>,
    retry: RetryPolicy,
    sleep: Sleeper,
}

impl PolicyHub {
    pub fn new(sources: Vec<PolicySource>, state: HubState, fetcher: Arc<dyn Fetcher>) -> Result<Self, HubError> {
        for s in &sources {
            s.validate()?;
        }
        Ok(Self { sources, state, fetcher, retry: RetryPolicy::default(), sleep: Arc::new(std::thread::sleep) })
    }

    pub fn with_retry(mut self, retry: RetryPolicy, sleep: Sleeper) -> Self {
        self.retry = retry;
        self.sleep = sleep;
        self
    }

    pub fn state(&self) -> &HubState {
        &self.state
    }

    pub fn sources(&self) -> &[PolicySource] {
        &self.sources
    }

    /// Polls every source once. Each change is passed to `callback` with the
    /// new document text (None for removals); the baseline advances only for
    /// changes the callback accepted. A failing source does not stop the others.
    pub fn poll_once<F>(&mut self, mut callback: F) -> PollReport
    where
        F: FnMut(&ChangeEvent, Option<&str>) -> Result<(), String>,
    {
        let mut report = PollReport::default();
        let now = Utc::now();
        for idx in 0..self.sources.len() {
            let source = self.sources[idx].clone();
            self.poll_source(&source, now, &mut callback, &mut report);
        }
        report
    }

    fn poll_source<F>(&mut self, source: &PolicySource, now: DateTime<Utc>, callback: &mut F, report: &mut PollReport)
    where
        F: FnMut(&ChangeEvent, Option<&str>) -> Result<(), String>,
    {
        let docs = match fetch_documents(source, self.fetcher.as_ref()) {
            Ok(d) => d,
            Err(e) => {
                tracing::warn!(source = %source.source_id, error = %e, "policy source unavailable");
                report.source_errors.push((source.source_id.clone(), e.to_string()));
                return;
            }
        };
        let current: Snapshot = docs.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect();
        let before = self.state.baselines.get(&source.source_id).cloned().unwrap_or_default();
        for event in diff_snapshots(&source.source_id, &before, &current, now) {
            let key = event_key(&event);
            let already = self.state.emitted.contains(&key);
            let outcome = if already { Ok(()) } else { self.deliver(&event, docs.get(&event.filename).map(String::as_str), callback) };
            match outcome {
                Ok(()) => {
                    let baseline = self.state.baselines.entry(source.source_id.clone()).or_default();
                    match &event.new_hash {
                        Some(h) => baseline.insert(event.filename.clone(), h.clone()),
                        None => baseline.remove(&event.filename),
                    };
                    if !already {
                        self.state.emitted.insert(key);
                        report.delivered.push(event);
                    }
                }
                Err(e) => report.failed.push((event, e)),
            }
        }
    }

    fn deliver<F>(&self, event: &ChangeEvent, content: Option<&str>, callback: &mut F) -> Result<(), String>
    where
        F: FnMut(&ChangeEvent, Option<&str>) -> Result<(), String>,
    {
        let mut attempt = 0;
        loop {
            match callback(event, content) {
                Ok(()) => return Ok(()),
                Err(e) if attempt + 1 < self.retry.max_attempts => {
                    tracing::warn!(file = %event.filename, attempt, error = %e, "ingest callback failed, retrying");
                    (self.sleep)(self.retry.base_delay.saturating_mul(1 << attempt.min(16)));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Polls each source on its own interval until `stop` returns true.
    pub fn run_until<F, S>(&mut self, mut callback: F, stop: S)
    where
        F: FnMut(&ChangeEvent, Option<&str>) -> Result<(), String>,
        S: Fn() -> bool,
    {
        let mut next_due: Vec<Instant> = vec![Instant::now(); self.sources.len()];
        while !stop() {
            let now = Instant::now();
            let mut report = PollReport::default();
            for idx in 0..self.sources.len() {
                if next_due[idx] <= now {
                    let source = self.sources[idx].clone();
                    self.poll_source(&source, Utc::now(), &mut callback, &mut report);
                    next_due[idx] = now + source.poll_interval;
                }
            }
            std::thread::sleep(Duration::from_millis(200));
        }
    }
}
