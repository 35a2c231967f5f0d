use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qdnas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdnas"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn run_dir(root: &Path, name: &str, generations: &str) -> std::path::PathBuf {
    let out = root.join(name);
    let o = qdnas(&["run", "--out", p(&out), "--generations", generations, "--batch-size", "20", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_dir(tmp.path(), "r", "4");
    for f in ["config.json", "manifest.json", "generations.jsonl", "snapshot.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let log = fs::read_to_string(out.join("generations.jsonl")).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["generation"], (i + 1) as u64);
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["finished_at"].is_string());
}

#[test]
fn identical_invocations_give_identical_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_dir(tmp.path(), "a", "6");
    let b = run_dir(tmp.path(), "b", "6");
    assert_eq!(
        fs::read(a.join("generations.jsonl")).unwrap(),
        fs::read(b.join("generations.jsonl")).unwrap()
    );
}

#[test]
fn resume_continues_an_interrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = run_dir(tmp.path(), "full", "12");
    let part = run_dir(tmp.path(), "part", "7");

    // Stretch the stopped run's horizon, as if it had been killed after
    // generation 7 of 12.
    let snap_path = part.join("snapshot.json");
    let mut snap: Value = serde_json::from_str(&fs::read_to_string(&snap_path).unwrap()).unwrap();
    snap["config"]["search"]["generations"] = 12.into();
    fs::write(&snap_path, serde_json::to_string(&snap).unwrap()).unwrap();

    let o = qdnas(&["resume", p(&snap_path)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(full.join("generations.jsonl")).unwrap(),
        fs::read_to_string(part.join("generations.jsonl")).unwrap()
    );
}

#[test]
fn resume_of_finished_run_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_dir(tmp.path(), "r", "3");
    let before = fs::read(out.join("snapshot.json")).unwrap();
    let o = qdnas(&["resume", p(&out.join("snapshot.json"))]);
    assert!(o.status.success());
    assert_eq!(before, fs::read(out.join("snapshot.json")).unwrap());
}

#[test]
fn resume_rejects_bad_snapshots_without_touching_them() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_dir(tmp.path(), "r", "2");
    let snap_path = out.join("snapshot.json");
    let mut snap: Value = serde_json::from_str(&fs::read_to_string(&snap_path).unwrap()).unwrap();
    snap["version"] = 999.into();
    let mismatched = serde_json::to_string(&snap).unwrap();
    fs::write(&snap_path, &mismatched).unwrap();
    let o = qdnas(&["resume", p(&snap_path)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
    assert_eq!(fs::read_to_string(&snap_path).unwrap(), mismatched);

    fs::write(&snap_path, "{ truncated").unwrap();
    let o = qdnas(&["resume", p(&snap_path)]);
    assert!(!o.status.success());
    assert_eq!(fs::read_to_string(&snap_path).unwrap(), "{ truncated");
}

#[test]
fn config_errors_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qdnas(&["run", "--out", p(&tmp.path().join("x")), "--config", p(&tmp.path().join("absent.json"))]);
    assert_eq!(o.status.code(), Some(2));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"search": {"batch_size": 0, "p_mutation": 0.9}}"#).unwrap();
    let o = qdnas(&["validate-config", "--config", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("batch_size"), "{err}");

    fs::write(&bad, r#"{"search": {"generationz": 3}}"#).unwrap();
    let o = qdnas(&["validate-config", "--config", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));

    let o = qdnas(&["validate-config", "--evaluator", "worker"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_config_prints_effective_config() {
    let o = qdnas(&["validate-config", "--mode", "mutation-only", "--generations", "9"]);
    assert!(o.status.success());
    let cfg: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cfg["search"]["mode"], "mutation-only");
    assert_eq!(cfg["search"]["generations"], 9);
}

#[test]
fn export_views() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_dir(tmp.path(), "r", "3");
    let snap = out.join("snapshot.json");
    let o = qdnas(&["export", p(&snap), "--what", "curve"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("generation,operator,best_loss"));

    let csv = tmp.path().join("prompts.csv");
    let o = qdnas(&["export", p(&snap), "--what", "prompt-archive", "--out", p(&csv)]);
    assert!(o.status.success());
    assert!(fs::read_to_string(&csv).unwrap().lines().count() > 1);

    let o = qdnas(&["export", p(&snap), "--what", "everything"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_centroids_is_seeded() {
    let a = qdnas(&["gen-centroids", "--k", "5", "--samples", "500", "--seed", "2"]);
    let b = qdnas(&["gen-centroids", "--k", "5", "--samples", "500", "--seed", "2"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["centroids"].as_array().unwrap().len(), 5);
}
