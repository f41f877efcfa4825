use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    root().join("configs").join(name)
}

fn run(args: &[&str], cfg: Option<&str>, out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gravojcm"));
    cmd.args(args);
    if let Some(c) = cfg {
        cmd.arg("--config").arg(config(c));
    }
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    cmd.output().unwrap()
}

fn record(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("run_record.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_initial_row_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["simulate"], Some("tiny.json"), Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("observables.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "lambda_t,W,F1,F2,delta_p,Q,S1,S2,trace,k_max_used");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "1.00000000000");
    assert!(first[5].parse::<f64>().unwrap().abs() < 1e-9);
    assert_eq!(lines.count(), 49);

    let rec = record(&out);
    assert_eq!(rec["command"], "simulate");
    for entry in rec["manifest"].as_array().unwrap() {
        let name = entry["file"].as_str().or(entry["name"].as_str()).unwrap();
        assert!(out.join(name).exists(), "{name}");
    }
    assert!(out.join("photon_distribution.csv").exists());
}

#[test]
fn qg_override_is_recorded_and_changes_hash() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["simulate"], Some("tiny.json"), Some(&a)).status.success());
    assert!(run(&["simulate", "--qg", "1.5e7"], Some("tiny.json"), Some(&b)).status.success());
    let (ra, rb) = (record(&a), record(&b));
    assert_eq!(rb["overrides"]["qg"].as_f64(), Some(1.5e7));
    assert_eq!(rb["config"]["physical"]["qg"].as_f64(), Some(1.5e7));
    assert_ne!(ra["param_hash"], rb["param_hash"]);

    // different physics: compare refuses
    let o = run(&["compare", a.to_str().unwrap(), b.to_str().unwrap()], None, None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"physical": {"lambda": -1}}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gravojcm"))
        .args(["simulate", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["simulate", "--seedless"], Some("tiny.json"), Some(&dir.path().join("y")));
    assert_eq!(o.status.code(), Some(2));

    let file = dir.path().join("plain");
    std::fs::write(&file, "").unwrap();
    let o = run(&["simulate"], Some("tiny.json"), Some(&file.join("sub")));
    assert_eq!(o.status.code(), Some(3));

    let budget_out = dir.path().join("literal");
    let o = run(&["oracle"], Some("reference_literal.json"), Some(&budget_out));
    assert_eq!(o.status.code(), Some(4));
    assert!(!budget_out.exists());
}

#[test]
fn self_compare_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(run(&["simulate"], Some("tiny.json"), Some(&a)).status.success());
    let cmp = dir.path().join("cmp");
    let p = a.to_str().unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gravojcm"));
    let o = cmd.args(["compare", p, p, "--threshold", "0", "--out"]).arg(&cmp).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let table = std::fs::read_to_string(cmp.join("discrepancy.csv")).unwrap();
    for row in table.lines().skip(1) {
        assert_eq!(row.split(',').nth(1), Some("0"), "{row}");
    }
    assert!(cmp.join("discrepancy.json").exists());
}

#[test]
fn oracle_matches_simulate_at_frozen_node() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("analytic");
    let o_dir = dir.path().join("oracle");
    assert!(run(&["simulate"], Some("frozen_node.json"), Some(&a)).status.success());
    let start = std::time::Instant::now();
    assert!(run(&["oracle"], Some("frozen_node.json"), Some(&o_dir)).status.success());
    assert!(start.elapsed().as_secs() < 30);
    assert_eq!(record(&o_dir)["regime"], "time_independent");

    let o = run(
        &["compare", a.to_str().unwrap(), o_dir.to_str().unwrap(), "--threshold", "1e-6"],
        None,
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn paper_mode_disagrees_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("paper");
    let o_dir = dir.path().join("oracle");
    assert!(run(&["simulate", "--mode", "paper"], Some("tiny.json"), Some(&p)).status.success());
    let start = std::time::Instant::now();
    assert!(run(&["oracle"], Some("tiny.json"), Some(&o_dir)).status.success());
    assert!(start.elapsed().as_secs() < 10);
    let o = run(
        &["compare", p.to_str().unwrap(), o_dir.to_str().unwrap(), "--threshold", "1e-6"],
        None,
        None,
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn figures_sweep_writes_all_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig");
    let o = run(&["figures"], Some("tiny.json"), Some(&out));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".svg")).count(), 15);
    assert_eq!(names.iter().filter(|n| n.ends_with(".csv")).count(), 3);
    assert!(names.iter().any(|n| n == "figures_record.json"));
    let svg = std::fs::read_to_string(out.join("fig1_inversion_qg1.5e7.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

    let o = run(&["figures", "--qg", "1"], Some("tiny.json"), Some(&dir.path().join("g")));
    assert_eq!(o.status.code(), Some(2));
}
