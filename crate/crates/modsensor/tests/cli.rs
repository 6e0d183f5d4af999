use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn modsensor(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modsensor"))
        .args(args)
        .current_dir(dir)
        .env("MODSENSOR_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = modsensor(args, dir);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn has_schema(v: &Value) {
    for key in ["tool_version", "config_echo", "seed"] {
        assert!(v.get(key).is_some(), "missing {key} in {v}");
    }
}

#[test]
fn help_exits_zero() {
    let dir = TempDir::new().unwrap();
    let out = modsensor(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_one_line_error() {
    let dir = TempDir::new().unwrap();
    let out = modsensor(&["state", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.contains("--bogus"));
}

#[test]
fn grid_state_reports_mean_phonons() {
    let dir = TempDir::new().unwrap();
    let v: Value = serde_json::from_str(&ok(&["state", "--family", "grid", "--delta", "0.37"], dir.path())).unwrap();
    has_schema(&v);
    let n = v["mean_n"].as_f64().unwrap();
    assert!((n - 3.22).abs() < 0.05 + 0.02 * 3.22, "{n}");
}

#[test]
fn fisher_names_a_missing_column() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("g.csv"), "eps_a,eps_b,P_a0,n_shots\n0,0,0.5,0\n").unwrap();
    let out = modsensor(&["fisher", "--input", "g.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("P_b0"));
}

#[test]
fn missing_input_file_exits_one() {
    let dir = TempDir::new().unwrap();
    let out = modsensor(&["fisher", "--input", "nowhere.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
}

#[test]
fn invalid_parameters_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        modsensor(&["state", "--delta", "1.5"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(modsensor(&["qpe", "--M", "0"], dir.path()).status.code(), Some(1));
}

#[test]
fn probgrid_feeds_fisher() {
    let dir = TempDir::new().unwrap();
    ok(&["probgrid", "--eta-a", "1", "--eta-b", "1", "-o", "g.csv"], dir.path());
    let v: Value = serde_json::from_str(&ok(&["fisher", "--input", "g.csv"], dir.path())).unwrap();
    has_schema(&v);
    let t = v["trace_min"].as_f64().unwrap();
    assert!(
        (t - 1.0 / std::f64::consts::PI).abs() < 0.01 / std::f64::consts::PI,
        "{t}"
    );
}

#[test]
fn qpe_replay_is_identical() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        &[
            "qpe",
            "--trials",
            "40",
            "--M",
            "32",
            "--mode",
            "adaptive",
            "-o",
            "a.jsonl",
            "--summary",
            "a.json",
        ],
        d,
    );
    ok(&["replay", "a.json", "-o", "b.jsonl", "--summary", "b.json"], d);
    assert_eq!(
        std::fs::read(d.join("a.jsonl")).unwrap(),
        std::fs::read(d.join("b.jsonl")).unwrap()
    );
    assert_eq!(json_file(&d.join("a.json")), json_file(&d.join("b.json")));
    has_schema(&json_file(&d.join("a.json")));
}

#[test]
fn replay_with_another_seed_keeps_the_schema() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        &[
            "qpe",
            "--trials",
            "20",
            "--M",
            "16",
            "-o",
            "a.jsonl",
            "--summary",
            "a.json",
        ],
        d,
    );
    ok(
        &[
            "replay",
            "a.json",
            "--seed",
            "9",
            "-o",
            "b.jsonl",
            "--summary",
            "b.json",
        ],
        d,
    );
    let (a, b) = (json_file(&d.join("a.json")), json_file(&d.join("b.json")));
    assert_ne!(
        std::fs::read(d.join("a.jsonl")).unwrap(),
        std::fs::read(d.join("b.jsonl")).unwrap()
    );
    assert_ne!(a["V_H_total"], b["V_H_total"]);
    assert_eq!(b["seed"], 9);
    let keys = |v: &Value| v.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&a), keys(&b));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_modsensor"))
            .args(["qpe", "--trials", "30", "--M", "16", "--seed", "4"])
            .current_dir(d)
            .env("MODSENSOR_THREADS", threads)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn analytic_probgrid_replays_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["probgrid", "--family", "np", "-o", "a.csv", "--summary", "a.json"], d);
    ok(&["replay", "a.json", "-o", "b.csv", "--summary", "b.json"], d);
    assert_eq!(
        std::fs::read(d.join("a.csv")).unwrap(),
        std::fs::read(d.join("b.csv")).unwrap()
    );
    has_schema(&json_file(&d.join("a.json")));
}

#[test]
fn version_mismatch_is_flagged() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["force", "--summary", "a.json"], d);
    let mut v = json_file(&d.join("a.json"));
    v["tool_version"] = "0.0.0-old".into();
    std::fs::write(d.join("old.json"), v.to_string()).unwrap();
    let out = modsensor(&["replay", "old.json"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--allow-version-mismatch"));
    ok(&["replay", "old.json", "--allow-version-mismatch"], d);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let cfg = r#"{"command": "force", "seed": 3, "params": {"delta_gamma": 0.052, "M": 64}}"#;
    std::fs::write(d.join("c.json"), cfg).unwrap();
    let v: Value = serde_json::from_str(&ok(&["force", "--config", "c.json", "--M", "128"], d)).unwrap();
    assert_eq!(v["seed"], 3);
    assert_eq!(v["config_echo"]["params"]["M"], 128);
    assert_eq!(v["config_echo"]["params"]["delta_gamma"], 0.052);
}

#[test]
fn config_schema_mismatch_is_rejected() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("typo.json"), r#"{"params": {"delta_gama": 0.1}}"#).unwrap();
    std::fs::write(d.join("other.json"), r#"{"command": "qpe"}"#).unwrap();
    for file in ["typo.json", "other.json"] {
        let out = modsensor(&["force", "--config", file], d);
        assert_eq!(out.status.code(), Some(1), "{file}");
    }
    let out = modsensor(&["force", "--config", "typo.json"], d);
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta_gama"));
}

#[test]
fn every_command_emits_the_schema() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(&["probgrid", "-o", "g.csv"], d);
    let runs: [&[&str]; 5] = [
        &["state", "--family", "np"],
        &["fisher", "--input", "g.csv"],
        &["magnus", "--K", "10"],
        &["force"],
        &["qpe", "--trials", "4", "--M", "8", "-o", "t.jsonl"],
    ];
    for args in runs {
        let v: Value = serde_json::from_str(&ok(args, d)).unwrap();
        has_schema(&v);
    }
}
