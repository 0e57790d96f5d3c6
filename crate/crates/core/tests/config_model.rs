use std::path::PathBuf;

use ransec_core::config_model::{diff_configs, extract_security_profile, parse_config};

fn fixtures() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/configs");
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "conf"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn every_fixture_round_trips() {
    let all = fixtures();
    assert!(all.len() >= 4);
    for (name, text) in all {
        let doc = parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(doc.serialize(), text, "{name}");
    }
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/configs").join(name)).unwrap()
}

#[test]
fn corrected_cu_touches_only_security() {
    let diff = diff_configs(&fixture("cu_gnb.conf"), &fixture("cu_gnb_corrected.conf")).unwrap();
    assert_eq!(diff.touched_group_paths.into_iter().collect::<Vec<_>>(), vec!["security".to_string()]);
}

#[test]
fn security_profiles_of_fixtures() {
    let weak = extract_security_profile(&parse_config(&fixture("gnb_sa.conf")).unwrap());
    assert_eq!(weak.ciphering_algorithms, ["nea0", "nea2"]);
    assert_eq!(weak.drb_integrity, "no");
    assert!(!weak.weak_settings().is_empty());

    let strong = extract_security_profile(&parse_config(&fixture("cu_up_gnb.conf")).unwrap());
    assert!(strong.weak_settings().is_empty(), "{:?}", strong.weak_settings());

    let du = extract_security_profile(&parse_config(&fixture("du_gnb.conf")).unwrap());
    assert!(du.is_empty());
}

#[test]
fn crlf_fixture_variant_round_trips() {
    let text = fixture("cu_gnb.conf").replace('\n', "\r\n");
    let doc = parse_config(&text).unwrap();
    assert_eq!(doc.serialize(), text);
}
