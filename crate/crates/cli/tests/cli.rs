use std::path::Path;
use std::process::{Command, Output};

fn zocmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zocmp"))
        .args(args)
        .env_remove("ZOCMP_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn lemma_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = zocmp(&["bench", "--suite", "lemma", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("PASS sign-agreement"));
    assert!(dir.path().join("bench-lemma/manifest.json").exists());
}

#[test]
fn generate_then_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pairs.jsonl");
    let o = zocmp(&["generate", "--out", path(&data), "--n-clean", "6", "--n-noisy", "3", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 9);

    let out = dir.path().join("split");
    let o = zocmp(&["split", "--dataset", path(&data), "--delta", "3", "--seed", "5", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = |f: &str| std::fs::read_to_string(out.join(f)).unwrap().lines().count();
    assert_eq!(lines("split.csv"), 10);
    assert_eq!(lines("clean.jsonl") + lines("noisy.jsonl"), 9);
}

#[test]
fn run_with_config_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"mode": "practical", "seed": 1, "dim": 40, "iterations": 5, "queries": 50}"#).unwrap();
    let out = dir.path().join("run");
    let o = zocmp(&["run", "--config", path(&config), "--seed", "9", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert!(out.join("trajectory.csv").exists());
}

#[test]
fn missing_config_is_an_error() {
    let o = zocmp(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn config_without_required_fields_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, "{}").unwrap();
    let o = zocmp(&["run", "--config", path(&config), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mode"));
}
