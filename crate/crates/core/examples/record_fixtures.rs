//! Regenerates the replay transcripts under tests/fixtures from planned
//! responses, by running the real pipeline through a recording provider.
//!
//! cargo run -p ransec-core --example record_fixtures

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ransec_core::agents::{
    run_compliance_loop, AgentOptions, Agents, RetrievalMode, ASSESSMENT_PROMPT, QUERY_GENERATOR_PROMPT, REFLECTION_PROMPT,
};
use ransec_core::eval::{replay_table_check, run_benchmark, BenchmarkManifest, BenchmarkOptions, ModelUnderTest};
use ransec_core::llm_provider::{
    fingerprint, ChatExchange, ChatProvider, EmbeddingProvider, Message, MockEmbedder, ProviderError, RecordingProvider,
};
use serde_json::json;

const QUERIES: &str = "Null ciphering algorithm NEA0 must not be the preferred ciphering algorithm.\n\
Integrity priority lists must not contain the null integrity algorithm NIA0.\n\
DRB integrity protection must be enabled when the security policy requires it.\n\
User plane data over F1 must be integrity and confidentiality protected.\n";

/// Serves queued responses by role, with a latency per call.
struct PlannedProvider {
    model: String,
    queries: Mutex<VecDeque<(String, u64)>>,
    assessments: Mutex<VecDeque<(String, u64)>>,
    reflections: Mutex<VecDeque<(String, u64)>>,
}

impl PlannedProvider {
    fn new(model: &str) -> Self {
        Self { model: model.into(), queries: Mutex::default(), assessments: Mutex::default(), reflections: Mutex::default() }
    }
}

impl ChatProvider for PlannedProvider {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn chat(&self, messages: &[Message]) -> Result<ChatExchange, ProviderError> {
        let system = messages.first().map(|m| m.content.as_str()).unwrap_or("");
        let queue = if system == QUERY_GENERATOR_PROMPT {
            &self.queries
        } else if system == ASSESSMENT_PROMPT {
            &self.assessments
        } else if system == REFLECTION_PROMPT {
            &self.reflections
        } else {
            return Err(ProviderError::MalformedResponse("unknown role".into()));
        };
        let (text, ms) = queue.lock().unwrap().pop_front().ok_or(ProviderError::ScriptExhausted)?;
        Ok(ChatExchange {
            model_name: self.model.clone(),
            fingerprint: fingerprint(&self.model, messages),
            messages: messages.to_vec(),
            response_text: text,
            latency: Duration::from_millis(ms),
            token_usage: None,
        })
    }
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn with_fence(report: &str, corrected: &str) -> String {
    format!("{}\n```corrected\n{corrected}```\n", report.trim_end())
}

const COMPLIANT: &str = "Compliance Status: Compliant\n\nViolations Found\nNone\n\nSpecification References\nNone\n\nRecommended Code Modifications\nNone\n\nSecurity Impact Analysis\nNone\n";

fn replace_line(text: &str, contains: &str, with: &str) -> String {
    text.lines()
        .map(|l| if l.contains(contains) { with.to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

struct Suite {
    /// (config_id, correct response, wrong responses)
    answers: Vec<(String, String, Vec<String>)>,
}

fn suite(dir: &Path) -> Suite {
    let cu = read(&dir.join("configs/cu_gnb.conf"));
    let cu_fixed = read(&dir.join("configs/cu_gnb_corrected.conf"));
    let golden = read(&dir.join("transcripts/golden_assessment.txt"));
    let cu_partial = replace_line(&replace_line(&cu, "ciphering_algorithms", "  ciphering_algorithms = ( \"nea2\" );"), "integrity_algorithms", "  integrity_algorithms = ( \"nia2\" );");
    let cu_partial_report = "Compliance Status: Non-Compliant\n\nViolations Found\n1. Ciphering (`ciphering_algorithms`): the only listed algorithm is nea0.\n2. Integrity (`integrity_algorithms`): nia0 is allowed as a fallback.\n\nSpecification References\n1. Clause 5.3.2 (Filename: ts_133501v180900p.md)\n";

    let sa = read(&dir.join("configs/gnb_sa.conf"));
    let sa_fixed = replace_line(
        &replace_line(
            &replace_line(&replace_line(&sa, "ciphering_algorithms", "  ciphering_algorithms = ( \"nea2\" );"), "integrity_algorithms", "  integrity_algorithms = ( \"nia2\" );"),
            "drb_ciphering",
            "  drb_ciphering = \"yes\";",
        ),
        "drb_integrity",
        "  drb_integrity = \"yes\";",
    );
    let sa_report = "Compliance Status: Non-Compliant\n\nViolations Found\n1. Ciphering (`ciphering_algorithms`): nea0 is listed first, so null ciphering is negotiated.\n2. Integrity (`integrity_algorithms`): only nia0 is listed.\n3. DRB ciphering (`drb_ciphering`): disabled.\n4. DRB integrity (`drb_integrity`): disabled.\n\nSpecification References\n1. Clauses 5.3.2 and 5.3.3 (Filename: ts_133501v180900p.md)\n2. Clause 9.2 (Filename: ts_138401v160300p.md)\n\nRecommended Code Modifications\n1. Use ( \"nea2\" ) and ( \"nia2\" ).\n2. Set drb_ciphering and drb_integrity to \"yes\".\n\nSecurity Impact Analysis\n1. User traffic is neither encrypted nor integrity protected.\n";
    let sa_wrong = "Compliance Status: Non-Compliant\n\nViolations Found\n1. Ciphering (`ciphering_algorithms`): nea0 is listed first.\n";

    let spurious = |cfg: &str| {
        let fixed = replace_line(cfg, "global_log_level", "  global_log_level = \"debug\";");
        with_fence(
            "Compliance Status: Non-Compliant\n\nViolations Found\n1. Logging (`global_log_level`): security events may be missed at info level.\n\nSpecification References\n1. Clause 7.8.1 (Filename: oran_wg11_sts_r004_v11.md)\n",
            &fixed,
        )
    };
    let du = read(&dir.join("configs/du_gnb.conf"));
    let cuup = read(&dir.join("configs/cu_up_gnb.conf"));

    Suite {
        answers: vec![
            ("cu_gnb".into(), with_fence(&golden, &cu_fixed), vec![COMPLIANT.into(), with_fence(cu_partial_report, &cu_partial)]),
            ("gnb_sa".into(), with_fence(sa_report, &sa_fixed), vec![with_fence(sa_wrong, &sa_fixed), COMPLIANT.into()]),
            ("du_gnb".into(), COMPLIANT.into(), vec![spurious(&du)]),
            ("cu_up_gnb".into(), COMPLIANT.into(), vec![spurious(&cuup)]),
        ],
    }
}

/// `n` integer latencies in ms whose sum is exactly `n * mean_ms`.
fn latencies(mean_ms: u64, n: usize) -> Vec<u64> {
    let mut out: Vec<u64> = (0..n).map(|i| (mean_ms as f64 * (1.0 + 0.1 * ((i % 4) as f64 - 1.5))).round() as u64).collect();
    let total = mean_ms * n as u64;
    let head: u64 = out[..n - 1].iter().sum();
    out[n - 1] = total - head;
    out
}

const MODELS: [(&str, &str); 3] = [("GPT-4.1 Mini", "gpt41mini"), ("Gemini 2.5 Flash", "gemini25flash"), ("Mistral Large-latest", "mistrallarge")];

/// Correct trials out of 12 and mean response time in ms, per model and mode.
fn plan(model: usize, mode: RetrievalMode) -> (usize, u64) {
    let table: [[(usize, u64); 3]; 3] = [
        [(7, 31_100), (3, 36_960), (9, 54_120)],
        [(8, 37_950), (2, 46_760), (10, 109_700)],
        [(6, 55_840), (4, 97_600), (8, 126_410)],
    ];
    let col = match mode {
        RetrievalMode::NoRag => 0,
        RetrievalMode::PlainRag => 1,
        RetrievalMode::AgenticRag => 2,
    };
    table[model][col]
}

fn mode_slug(mode: RetrievalMode) -> &'static str {
    match mode {
        RetrievalMode::NoRag => "norag",
        RetrievalMode::PlainRag => "rag",
        RetrievalMode::AgenticRag => "agentic",
    }
}

fn record_table(dir: &Path) {
    let suite = suite(dir);
    let table_dir = dir.join("table");
    std::fs::create_dir_all(&table_dir).unwrap();
    let truth = |id: &str| match id {
        "cu_gnb" => json!({"expected_status": "NonCompliant", "expected_violation_paths": ["security.ciphering_algorithms", "security.integrity_algorithms", "security.drb_integrity"]}),
        "gnb_sa" => json!({"expected_status": "NonCompliant", "expected_violation_paths": ["security.ciphering_algorithms", "security.integrity_algorithms", "security.drb_ciphering", "security.drb_integrity"]}),
        _ => json!({"expected_status": "Compliant"}),
    };
    let configs: Vec<_> = suite
        .answers
        .iter()
        .map(|(id, _, _)| {
            let mut c = truth(id);
            c["config_id"] = json!(id);
            c["path"] = json!(format!("../configs/{id}.conf"));
            if id == "cu_gnb" {
                c["reference_report"] = json!("../transcripts/golden_assessment.txt");
            }
            c
        })
        .collect();
    let mut models = Vec::new();
    let mut expected_accuracy = BTreeMap::new();
    let mut expected_latency = BTreeMap::new();
    for (name, slug) in MODELS {
        let transcripts: BTreeMap<String, String> =
            RetrievalMode::ALL.iter().map(|m| (serde_json::to_value(m).unwrap().as_str().unwrap().to_string(), format!("{slug}_{}.jsonl", mode_slug(*m)))).collect();
        models.push(json!({"name": name, "transcripts": transcripts}));
        let acc: BTreeMap<&str, String> = RetrievalMode::ALL.iter().map(|m| (m.label(), ransec_core::eval::format_ratio(plan(models.len() - 1, *m).0, 12, 2))).collect();
        let lat: BTreeMap<&str, String> = RetrievalMode::ALL.iter().map(|m| (m.label(), format!("{:.2}", plan(models.len() - 1, *m).1 as f64 / 1000.0))).collect();
        expected_accuracy.insert(name, acc);
        expected_latency.insert(name, lat);
    }
    let manifest = json!({
        "runs_per_config": 3,
        "scoring": "strict",
        "corpus_dir": "../corpus",
        "modes": RetrievalMode::ALL,
        "configs": configs,
        "models": models,
        "expected_accuracy": expected_accuracy,
        "expected_latency": expected_latency,
    });
    let manifest_path = table_dir.join("table.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap() + "\n").unwrap();

    let manifest = BenchmarkManifest::load(&manifest_path).unwrap();
    let (bench_configs, truths) = manifest.suite().unwrap();
    let embedder: Arc<dyn EmbeddingProvider> = Arc::new(MockEmbedder::default());
    let store = manifest.build_store(embedder.as_ref()).unwrap();
    let options = BenchmarkOptions {
        agent_options: AgentOptions { include_local_latency: false, ..AgentOptions::default() },
        ..BenchmarkOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for (mi, (name, slug)) in MODELS.iter().enumerate() {
        for mode in RetrievalMode::ALL {
            let (correct, mean_ms) = plan(mi, mode);
            let mut order: Vec<usize> = (0..12).collect();
            order.shuffle(&mut rng);
            let correct_set: Vec<usize> = order[..correct].to_vec();
            let lats = latencies(mean_ms, 12);
            let planned = PlannedProvider::new(name);
            for (trial, total_ms) in lats.iter().enumerate() {
                let (_, right, wrong) = &suite.answers[trial / 3];
                let text = if correct_set.contains(&trial) { right.clone() } else { wrong[trial % wrong.len()].clone() };
                let assess_ms = if mode == RetrievalMode::AgenticRag {
                    let q = total_ms / 4;
                    planned.queries.lock().unwrap().push_back((QUERIES.to_string(), q));
                    total_ms - q
                } else {
                    *total_ms
                };
                planned.assessments.lock().unwrap().push_back((text, assess_ms));
            }
            let recorder = Arc::new(RecordingProvider::new(planned));
            let model = ModelUnderTest { name: name.to_string(), agents: Agents::single(recorder.clone(), embedder.clone()) };
            let report = run_benchmark(&bench_configs, &truths, &[mode], &[model], store.as_ref(), &options).unwrap();
            assert_eq!(report.cells[0].correct, correct, "{name} {mode}");
            recorder.save(&table_dir.join(format!("{slug}_{}.jsonl", mode_slug(mode)))).unwrap();
        }
    }
    let report = replay_table_check(&manifest_path).unwrap();
    println!("{}", ransec_core::eval::render_table(&report));
}

fn record_golden(dir: &Path) {
    let cu = read(&dir.join("configs/cu_gnb.conf"));
    let cu_fixed = read(&dir.join("configs/cu_gnb_corrected.conf"));
    let golden = read(&dir.join("transcripts/golden_assessment.txt"));
    let reflection = read(&dir.join("transcripts/golden_reflection.json"));
    let planned = PlannedProvider::new("golden");
    planned.queries.lock().unwrap().push_back((QUERIES.to_string(), 1_850));
    planned.assessments.lock().unwrap().push_back((with_fence(&golden, &cu_fixed), 21_400));
    planned.reflections.lock().unwrap().push_back((reflection, 6_300));
    let recorder = Arc::new(RecordingProvider::new(planned));
    let embedder: Arc<dyn EmbeddingProvider> = Arc::new(MockEmbedder::default());
    let mut store = ransec_core::knowledge_base::KnowledgeStore::for_provider(embedder.as_ref());
    store.ingest_dir(&dir.join("corpus"), embedder.as_ref(), &Default::default()).unwrap();
    let agents = Agents::single(recorder.clone(), embedder);
    let outcome = run_compliance_loop(&agents, &AgentOptions::default(), RetrievalMode::AgenticRag, &cu, Some(&store), None, None).unwrap();
    assert!(outcome.converged());
    recorder.save(&dir.join("transcripts/golden_agentic.jsonl")).unwrap();
    println!("golden loop: {} iterations, {} retrieved", outcome.iterations_used, outcome.assessments[0].retrieved.len());
}

fn main() {
    let dir = fixtures();
    record_golden(&dir);
    record_table(&dir);
}
