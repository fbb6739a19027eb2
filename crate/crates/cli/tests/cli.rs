//! The `greengrid` binary: simulate, report, verify and compare.

use std::path::Path;
use std::process::{Command, Output};

fn greengrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_greengrid")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scenario_file() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/default.toml")
}

#[test]
fn simulate_report_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = greengrid(&["simulate", "--scenario", scenario_file(), "--seed", "7", "--days", "3", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.json", "ledger.ndjson", "world.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }

    let o = greengrid(&["report", "--in", out]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("deposits"));

    let ledger = dir.path().join("ledger.ndjson");
    let o = greengrid(&["ledger", "verify", ledger.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("ok: "));

    tamper(&ledger, 4);
    let o = greengrid(&["ledger", "verify", ledger.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("first_bad_seq 4"), "{}", stdout(&o));
}

fn tamper(path: &Path, line: usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut v: serde_json::Value = serde_json::from_str(&lines[line]).unwrap();
    let w = v["weight_kg"].as_f64().unwrap();
    v["weight_kg"] = serde_json::json!(w + 0.5);
    lines[line] = v.to_string();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn bad_inputs_exit_with_two() {
    let o = greengrid(&["ledger", "verify", "/nonexistent/ledger.ndjson"]);
    assert_eq!(o.status.code(), Some(2));
    let o = greengrid(&["simulate", "--days", "1", "--preset", "bribery", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("preset"));
}

#[test]
fn compare_prints_one_row_per_preset() {
    let o = greengrid(&["compare", "--days", "2", "--presets", "none,monetary"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("monetary"));
}
