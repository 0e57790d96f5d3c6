use std::path::{Path, PathBuf};

use ransec_core::agents::RetrievalMode;
use ransec_core::eval::{render_table, replay_table_check, BenchmarkManifest, EvalError};
use ransec_core::llm_provider::Transcript;
use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest);
        } else {
            std::fs::copy(&p, &dest).unwrap();
        }
    }
}

fn scratch() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures(), dir.path());
    let manifest = dir.path().join("table/table.json");
    (dir, manifest)
}

#[test]
fn replayed_table_renders_every_cell() {
    let report = replay_table_check(&fixtures().join("table/table.json")).unwrap();
    assert!(report.cells_match_trials());
    assert_eq!(report.trials.len(), 3 * 3 * 12);
    let table = render_table(&report);
    assert!(table.starts_with("| Metric | Method | GPT-4.1 Mini | Gemini 2.5 Flash | Mistral Large-latest |\n"));
    assert!(table.contains("| Accuracy | Agentic RAG | 0.75 | 0.83 | 0.67 |"));
    assert!(table.contains("| Response Time (s) | RAG | 36.96 | 46.76 | 97.60 |"));
    assert!(!table.contains("n/a"));
    assert_eq!(report.metadata.runs_per_config, 3);
    assert!(report.metadata.corpus_hash.is_some());
}

#[test]
fn replay_is_repeatable() {
    let a = replay_table_check(&fixtures().join("table/table.json")).unwrap();
    let b = replay_table_check(&fixtures().join("table/table.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn wrong_expectation_is_reported() {
    let (_dir, manifest) = scratch();
    let mut m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    m["expected_accuracy"]["Gemini 2.5 Flash"]["RAG"] = "0.18".into();
    std::fs::write(&manifest, m.to_string()).unwrap();
    match replay_table_check(&manifest) {
        Err(EvalError::FixtureMismatch { model, mode, expected, found }) => {
            assert_eq!((model.as_str(), mode.as_str(), expected.as_str(), found.as_str()), ("Gemini 2.5 Flash", "RAG", "0.18", "0.17"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_transcript_invalidates_the_cell() {
    let (dir, manifest) = scratch();
    let path = dir.path().join("table/gpt41mini_norag.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().skip(6).collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    let m = BenchmarkManifest::load(&manifest).unwrap();
    assert!(matches!(m.run(), Err(EvalError::Manifest(msg)) if msg.contains("corrupt")));

    let mut t = Transcript::parse(&text).unwrap();
    t.records.drain(..6);
    t.save(&path).unwrap();
    let report = m.run().unwrap();
    let cell = report.cell("GPT-4.1 Mini", RetrievalMode::NoRag).unwrap();
    assert!(cell.errored > 3 && cell.invalid, "{cell:?}");
    assert!(m.check(&report).is_err());
    let table = render_table(&report);
    assert!(table.contains("| Accuracy | No-RAG | n/a* | 0.67 | 0.50 |"), "{table}");
    assert!(table.contains("25%"));
}
