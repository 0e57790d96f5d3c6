use std::path::PathBuf;
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn ransec(args: &[&str]) -> Output {
    let cwd = tempfile::tempdir().unwrap();
    Command::new(env!("CARGO_BIN_EXE_ransec")).args(args).current_dir(cwd.path()).output().unwrap()
}

fn path(rel: &str) -> String {
    fixtures().join(rel).display().to_string()
}

#[test]
fn assess_replays_the_golden_report() {
    let out = ransec(&[
        "--corpus",
        &path("corpus"),
        "assess",
        &path("configs/cu_gnb.conf"),
        "--mode",
        "agentic",
        "--replay",
        &path("transcripts/golden_agentic.jsonl"),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.starts_with("# Compliance Report\n\nCompliance Status: Non-Compliant"), "{stdout}");
    assert!(stdout.contains("drb_integrity"));
}

#[test]
fn loop_prints_json_outcome() {
    let out = ransec(&[
        "--corpus",
        &path("corpus"),
        "loop",
        &path("configs/cu_gnb.conf"),
        "--replay",
        &path("transcripts/golden_agentic.jsonl"),
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["outcome"], "Converged");
    assert_eq!(v["iterations_used"], 1);
}

#[test]
fn bench_prints_the_table() {
    let out = ransec(&["bench", &path("table/table.json")]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("| Accuracy | Agentic RAG | 0.75 | 0.83 | 0.67 |"), "{stdout}");
    assert!(stdout.contains("| Response Time (s) | Agentic RAG | 54.12 | 109.70 | 126.41 |"), "{stdout}");
}

#[test]
fn exit_codes() {
    assert_eq!(ransec(&["assess", "--bogus"]).status.code(), Some(2));
    assert_eq!(ransec(&[]).status.code(), Some(2));
    let missing = ransec(&["assess", "/nonexistent.conf", "--replay", &path("transcripts/golden_agentic.jsonl")]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error: "));
    let no_backend = ransec(&["assess", &path("configs/cu_gnb.conf")]);
    assert_eq!(no_backend.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_backend.stderr).contains("--replay"));
    assert_eq!(ransec(&["assess", &path("configs/cu_gnb.conf"), "--mode", "psychic"]).status.code(), Some(2));
}
