use std::path::Path;
use std::process::{Command, Output};

fn fde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fde")).args(args).output().unwrap()
}

fn run_tabular(dir: &Path, name: &str, workers: &str) -> String {
    let out = dir.join(name);
    let cfg = dir.join("cfg.toml");
    std::fs::write(&cfg, "timing = false\nmethods = [\"kl\", \"cramer\"]\n").unwrap();
    let o = fde(&[
        "run-tabular",
        "--config",
        cfg.to_str().unwrap(),
        "--reps",
        "3",
        "--n",
        "40,80",
        "--seed",
        "11",
        "--workers",
        workers,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn tabular_csv_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let one = run_tabular(dir.path(), "a.csv", "1");
    let two = run_tabular(dir.path(), "b.csv", "2");
    assert_eq!(one, two);
    let lines: Vec<&str> = one.lines().collect();
    assert_eq!(lines[0], "method,n,rep,seed,T,inaccuracy,runtime_ms,failed");
    assert_eq!(lines.len(), 1 + 2 * 2 * 3);
    assert!(lines[1].starts_with("cramer,40,0,"));

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["master_seed"], 11);
    assert_eq!(meta["config"]["reps"], 3);
}

#[test]
fn exit_codes() {
    assert_eq!(fde(&["check", "--suite", "sandwich"]).status.code(), Some(0));
    assert_eq!(fde(&["check", "--suite", "slc", "--negative-control"]).status.code(), Some(2));
    assert_eq!(fde(&["check", "--suite", "nonsense"]).status.code(), Some(1));
    assert_eq!(fde(&["run-lqr", "--reps", "0"]).status.code(), Some(1));
    assert_eq!(fde(&["run-lqr", "--methods", "kl,hyvarinen"]).status.code(), Some(1));
    assert_eq!(fde(&["run-lqr", "--config", "/nonexistent/cfg.toml"]).status.code(), Some(1));
    assert_eq!(fde(&["--bogus-flag"]).status.code(), Some(1));
}

#[test]
fn truth_lqr_prints_parameters() {
    let o = fde(&["truth-lqr"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let p = v["row_major"].as_array().unwrap();
    assert_eq!(p.len(), 12);
    assert!((p[0].as_f64().unwrap() - 9.836244541484714).abs() < 1e-9);
}
