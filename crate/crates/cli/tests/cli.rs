use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn et14(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_et14")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("et14-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn summary_without_timestamp(dir: &Path) -> Value {
    let mut v = json(dir.join("summary.json"));
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn verify_bundled_x_passes() {
    let dir = scratch("verify");
    let o = et14(&["verify", "--form", "x", "--samples", "200", "--seed", "7", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(dir.join("summary.json"));
    assert_eq!(s["command"], "verify");
    assert_eq!(s["pass"], true);
    for key in ["config", "checks", "timestamp"] {
        assert!(s.get(key).is_some(), "{key}");
    }
    let c = &s["checks"][0];
    for key in ["name", "paper_ref", "max_rel", "pass"] {
        assert!(c.get(key).is_some(), "{key}");
    }
    assert_eq!(fs::read_to_string(dir.join("rows.jsonl")).unwrap().lines().count(), 200);
}

#[test]
fn tampered_closure_names_galilean_h() {
    let dir = scratch("tampered");
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/x_families.json")).unwrap();
    let mut specs: Vec<Value> = serde_json::from_str(&text).unwrap();
    let mut spec = specs.swap_remove(0);
    spec["functions"][0] = serde_json::json!({"vars": ["Q1"], "terms": [{"exp": [1], "coef": 1.0}]});
    let path = dir.join("tampered.json");
    fs::write(&path, spec.to_string()).unwrap();
    let o = et14(&["verify", "--samples", "20", "--closure", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("failed: galilean_h"), "{}", stderr(&o));
}

#[test]
fn empty_sample_set_is_a_usage_error() {
    let o = et14(&["verify", "--samples", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty sample set"));
}

#[test]
fn io_and_parse_failures_exit_2() {
    let dir = scratch("io");
    let missing = dir.join("missing.json");
    assert_eq!(et14(&["convexity", "--closure", missing.to_str().unwrap()]).status.code(), Some(2));
    let bad = dir.join("bad.json");
    fs::write(&bad, "{\"form\": \"x\", \"functions\": 3}").unwrap();
    assert_eq!(et14(&["verify", "--closure", bad.to_str().unwrap()]).status.code(), Some(2));
    let eta = dir.join("eta.json");
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/eta_families.json")).unwrap();
    fs::write(&eta, text).unwrap();
    let o = et14(&["verify", "--form", "x", "--closure", eta.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn x_form_failure_is_reproduced() {
    let dir = scratch("xform");
    let o = et14(&["convexity", "--reproduce-form5-failure", "--points", "2", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d = json(dir.join("details.json"));
    let analyses = d["analyses"].as_array().unwrap();
    assert_eq!(analyses.len(), 20);
    for a in analyses {
        assert_eq!(a["verdict"]["verdict"], "indefinite");
        assert!(!a["verdict"]["counterexample"].is_null());
        assert!(a["q_direct"].as_f64().unwrap() < 0.0);
    }
}

#[test]
fn scan_k_writes_a_verdict_table() {
    let dir = scratch("scan");
    let o = et14(&["convexity", "--form", "eta", "--points", "1", "--scan-K", "degree=2", "count=50", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.join("scan.csv")).unwrap();
    assert!(csv.starts_with("family,lambda,lambda_ll,verdict,"));
    assert_eq!(csv.lines().count(), 51);
    let bad = et14(&["convexity", "--form", "eta", "--scan-K", "depth=2"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn reduce_prints_round_trip_error() {
    let o = et14(&["reduce", "--samples", "200", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("max round-trip invariant error"));
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["command"], "reduce");
}

#[test]
fn reduce_rejects_non_symmetric_state() {
    let dir = scratch("nonsym");
    let path = dir.join("state.json");
    fs::write(
        &path,
        r#"{"lambda":1,"lambda_i":[0,0,0],"lambda_ij":[[1,2,0],[3,1,0],[0,0,1]],"lambda_ill":[0,0,0],"lambda_ppll":0.5}"#,
    )
    .unwrap();
    let o = et14(&["reduce", "--state", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not symmetric"));
}

#[test]
fn subsystem_reports_eta5_residual() {
    let dir = scratch("sub");
    let o = et14(&["subsystem", "--out", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d = json(dir.join("details.json"));
    assert_eq!(d["eta5"]["value"], serde_json::json!([16.0, 0.0, 0.0]));
}

#[test]
fn reports_are_reproducible_and_csv_is_available() {
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for d in [&a, &b] {
        let o = et14(&["verify", "--form", "eta", "--samples", "40", "--seed", "11", "--format", "csv", "--out", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(summary_without_timestamp(&a), summary_without_timestamp(&b));
    let (ca, cb) = (fs::read(a.join("rows.csv")).unwrap(), fs::read(b.join("rows.csv")).unwrap());
    assert_eq!(ca, cb);
    assert!(String::from_utf8(ca).unwrap().starts_with("index,digest,"));
}

#[test]
fn tolerance_overrides_are_echoed() {
    let o = et14(&["verify", "--samples", "5", "--tol-exact", "1e-20"]);
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["config"]["tol"]["exact"], 1e-20);
    assert_eq!(o.status.code(), Some(1));
}
