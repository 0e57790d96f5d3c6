use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use super::{fingerprint, ChatExchange, ChatProvider, EmbeddingProvider, Message, ProviderError};

type Responder = Box<dyn Fn(&[Message]) -> Result<String, ProviderError> + Send + Sync>;

enum Script {
    Sequence(Mutex<VecDeque<Result<String, ProviderError>>>),
    ByFingerprint(HashMap<String, String>),
    Function(Responder),
}

/// Offline chat provider answering from a fixed script.
pub struct ScriptedProvider {
    model_name: String,
    script: Script,
    latency: Duration,
    calls: AtomicUsize,
    received: Mutex<Vec<Vec<Message>>>,
}

impl ScriptedProvider {
    fn with_script(model_name: impl Into<String>, script: Script) -> Self {
        Self {
            model_name: model_name.into(),
            script,
            latency: Duration::ZERO,
            calls: AtomicUsize::new(0),
            received: Mutex::new(Vec::new()),
        }
    }

    /// Answers with `responses` in order, then `ScriptExhausted`.
    pub fn sequence<I, S>(model_name: impl Into<String>, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::sequence_results(model_name, responses.into_iter().map(|r| Ok(r.into())))
    }

    /// Like [`ScriptedProvider::sequence`] but individual steps may fail.
    pub fn sequence_results<I>(model_name: impl Into<String>, responses: I) -> Self
    where
        I: IntoIterator<Item = Result<String, ProviderError>>,
    {
        Self::with_script(model_name, Script::Sequence(Mutex::new(responses.into_iter().collect())))
    }

    /// Answers by request fingerprint; unknown requests yield `MissingTranscript`.
    pub fn by_fingerprint(model_name: impl Into<String>, responses: HashMap<String, String>) -> Self {
        Self::with_script(model_name, Script::ByFingerprint(responses))
    }

    pub fn from_fn<F>(model_name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[Message]) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        Self::with_script(model_name, Script::Function(Box::new(f)))
    }

    /// Latency reported on each exchange. Nothing actually sleeps.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn received(&self) -> Vec<Vec<Message>> {
        self.received.lock().unwrap().clone()
    }
}

impl ChatProvider for ScriptedProvider {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn chat(&self, messages: &[Message]) -> Result<ChatExchange, ProviderError> {
        if messages.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.received.lock().unwrap().push(messages.to_vec());
        let fp = fingerprint(&self.model_name, messages);
        let text = match &self.script {
            Script::Sequence(queue) => queue.lock().unwrap().pop_front().ok_or(ProviderError::ScriptExhausted)??,
            Script::ByFingerprint(map) => map.get(&fp).cloned().ok_or_else(|| ProviderError::MissingTranscript(fp.clone()))?,
            Script::Function(f) => f(messages)?,
        };
        Ok(ChatExchange {
            model_name: self.model_name.clone(),
            fingerprint: fp,
            messages: messages.to_vec(),
            response_text: text,
            latency: self.latency,
            token_usage: None,
        })
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(FNV_PRIME);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic feature-hashing embedder.
///
/// Text is lowercased and split into ASCII-alphanumeric tokens. Every token
/// adds weight 1 and every adjacent token pair adds weight 0.5 to a bucket
/// chosen by a seeded FNV-1a hash, with the sign taken from the hash's top bit.
/// Vectors are returned unnormalized.
#[derive(Clone, Debug)]
pub struct MockEmbedder {
    dimension: usize,
    seed: u64,
    id: String,
}

impl MockEmbedder {
    pub const DEFAULT_DIMENSION: usize = 1536;

    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension, seed, id: format!("mock-fnv:d{dimension}:s{seed}") }
    }

    fn add(&self, v: &mut [f32], feature: &[u8], weight: f32) {
        let h = fnv1a(self.seed, feature);
        let idx = (h % self.dimension as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[idx] += sign * weight;
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dimension];
        let tokens = crate::text::tokens(text);
        for t in &tokens {
            self.add(&mut v, t.as_bytes(), 1.0);
        }
        for pair in tokens.windows(2) {
            let feature = format!("{} {}", pair[0], pair[1]);
            self.add(&mut v, feature.as_bytes(), 0.5);
        }
        v
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION, 0)
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn embedder_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_then_exhausted() {
        let p = ScriptedProvider::sequence("m", ["one", "two"]);
        let msgs = [Message::user("q")];
        assert_eq!(p.chat(&msgs).unwrap().response_text, "one");
        assert_eq!(p.chat(&msgs).unwrap().response_text, "two");
        assert_eq!(p.chat(&msgs).unwrap_err(), ProviderError::ScriptExhausted);
        assert_eq!(p.calls(), 3);
        assert_eq!(p.received().len(), 3);
    }

    #[test]
    fn fingerprint_lookup() {
        let msgs = [Message::user("q")];
        let map = HashMap::from([(fingerprint("m", &msgs), "hit".to_string())]);
        let p = ScriptedProvider::by_fingerprint("m", map);
        assert_eq!(p.chat(&msgs).unwrap().response_text, "hit");
        assert!(matches!(p.chat(&[Message::user("other")]), Err(ProviderError::MissingTranscript(_))));
    }

    #[test]
    fn function_mode_sees_messages() {
        let p = ScriptedProvider::from_fn("m", |m| Ok(m.last().unwrap().content.to_uppercase()))
            .with_latency(Duration::from_millis(7));
        let ex = p.chat(&[Message::user("abc")]).unwrap();
        assert_eq!(ex.response_text, "ABC");
        assert_eq!(ex.latency, Duration::from_millis(7));
    }

    #[test]
    fn embedder_is_deterministic_and_token_based() {
        let e = MockEmbedder::default();
        let a = e.embed_one("NEA2 ciphering, required!");
        assert_eq!(a, e.embed_one("nea2   CIPHERING required"));
        assert_eq!(a.len(), 1536);
        let mass: f32 = a.iter().map(|x| x.abs()).sum();
        // 3 unigrams + 2 bigrams, barring collisions
        assert!((mass - 4.0).abs() < 1e-6);
        assert!(e.embed_one("").iter().all(|x| *x == 0.0));
        assert_ne!(a, MockEmbedder::new(1536, 1).embed_one("nea2 ciphering required"));
    }

    #[test]
    fn embedder_rejects_empty_batch() {
        assert_eq!(MockEmbedder::default().embed(&[]).unwrap_err(), ProviderError::EmptyInput);
    }
}
