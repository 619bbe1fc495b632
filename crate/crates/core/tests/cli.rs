mod common;

use std::path::Path;
use std::process::{Command, Output};

fn zfdt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zfdt")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn build(dir: &Path) {
    let corpus = common::fixture_corpus();
    let o = zfdt(dir, &["--stub", "build", corpus.to_str().unwrap(), "--workspace", "ws"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn build_is_idempotent_and_query_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    build(dir.path());
    let corpus = common::fixture_corpus();
    let again = zfdt(dir.path(), &["--stub", "build", corpus.to_str().unwrap(), "--workspace", "ws"]);
    assert!(stdout(&again).contains("up to date"));

    let q = ["--stub", "query", "Bloody stools with abdominal pain", "--workspace", "ws", "--json"];
    let a = zfdt(dir.path(), &q);
    let b = zfdt(dir.path(), &q);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["answer"].as_str().unwrap().ends_with(zfdt::retrieval::DISCLAIMER));

    let plain = zfdt(dir.path(), &["--stub", "--trace", "query", "fever", "--workspace", "ws"]);
    assert!(plain.status.success());
    assert!(stdout(&plain).contains("[Recommended Formulas]"));
}

#[test]
fn usage_and_workspace_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = zfdt(dir.path(), &["--stub", "query", "fever", "--workspace", "nowhere"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
    assert_eq!(zfdt(dir.path(), &["bounds", "7"]).status.code(), Some(2));
    assert_eq!(zfdt(dir.path(), &["--top-k", "0", "bounds", "1"]).status.code(), Some(2));
    assert_eq!(zfdt(dir.path(), &["--stub", "build", "absent.jsonl", "--workspace", "ws"]).status.code(), Some(2));
}

#[test]
fn dataset_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    build(dir.path());
    let o = zfdt(dir.path(), &["--stub", "dataset", "sft", "sft.jsonl", "--workspace", "ws", "--limit", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("sft.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["instruction"], zfdt::dataset::INSTRUCTION);
    }

    // Outputs equal to references score perfectly on the overlap metrics.
    let refs: Vec<String> = text
        .lines()
        .map(|l| serde_json::json!({"output": serde_json::from_str::<serde_json::Value>(l).unwrap()["output"]}).to_string())
        .collect();
    std::fs::write(dir.path().join("refs.jsonl"), refs.join("\n")).unwrap();
    let o = zfdt(dir.path(), &["--stub", "eval", "refs.jsonl", "refs.jsonl", "--workspace", "ws", "--out", "rep"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tsv = std::fs::read_to_string(dir.path().join("rep/report.tsv")).unwrap();
    let mut lines = tsv.lines();
    assert_eq!(lines.next().unwrap(), "BLEU\tROUGE-S\tCCR\tCSCR\tCCHR\tFS\tSCR\tLR\tAvg");
    let vals: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(&vals[..2], &["1.0000", "1.0000"]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rep/report.json")).unwrap()).unwrap();
    assert_eq!(json["items"].as_array().unwrap().len(), 3);

    std::fs::write(dir.path().join("short.jsonl"), refs[..2].join("\n")).unwrap();
    let o = zfdt(dir.path(), &["--stub", "eval", "short.jsonl", "refs.jsonl", "--workspace", "ws"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bounds_prints_table_and_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let ok = zfdt(dir.path(), &["bounds", "3"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout(&ok).contains("PASS"));
    let red = zfdt(dir.path(), &["bounds", "2", "--json"]);
    assert_eq!(red.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&red.stdout).unwrap();
    assert_eq!(v[0]["proposition"], 2);
    assert_eq!(v[0]["satisfied"], false);
}
