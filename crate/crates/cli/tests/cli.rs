use std::path::PathBuf;
use std::process::{Command, Output};

fn nkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nkit")).args(args).output().unwrap()
}

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name).display().to_string()
}

fn scratch(name: &str, body: &str) -> String {
    let dir = std::env::temp_dir().join(format!("nkit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

fn report(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn tate_pipeline() {
    let out = nkit(&["nygaard", "graded", "ht", "check-theorem", &corpus("diag-p3-1.json")]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["results"]["ht"]["weights"], serde_json::json!({"1": 1}));
    assert_eq!(r["results"]["check-theorem"]["pass"], true);
    assert_eq!(r["commands"], serde_json::json!(["nygaard", "graded", "ht", "check-theorem"]));
}

#[test]
fn commands_run_in_dependency_order() {
    let out = nkit(&["ht", "nygaard", &corpus("diag-p3-1.json")]);
    assert_eq!(report(&out)["commands"], serde_json::json!(["nygaard", "ht"]));
}

#[test]
fn theta_document_check_prop() {
    let out = nkit(&["check-prop", &corpus("theta-diag-p3-1.json")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["results"]["check-prop"]["pass"], true);
}

#[test]
fn output_is_deterministic() {
    let f = corpus("conj-p3-u.json");
    let a = nkit(&["all", &f, "--seed", "7"]);
    let b = nkit(&["all", &f, "--seed", "7"]);
    assert_eq!(a.stdout, b.stdout);
    let t = nkit(&["all", &f, "--format", "text"]);
    assert!(String::from_utf8(t.stdout).unwrap().contains("status: ok"));
}

#[test]
fn schema_errors_exit_two() {
    let f = scratch("bad.json", r#"{"p": 2, "N": 8, "M": 32, "bk": {"frobenius": [["1"]]}}"#);
    let out = nkit(&["ht", &f]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("/p") && err.contains("/bk/height"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(nkit(&["split", &corpus("diag-p3-1.json")]).status.code(), Some(2));
    assert_eq!(nkit(&["ht", "/nonexistent/file.json"]).status.code(), Some(2));
    assert_eq!(nkit(&["ht", &corpus("diag-p3-1.json"), "--precision", "x"]).status.code(), Some(2));
}

#[test]
fn failed_verdict_exits_one() {
    let out = nkit(&["griffiths", &corpus("tri-p3-u-e4.json")]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["results"]["griffiths"]["pass"], false);
}

#[test]
fn uncertified_precision_exits_three() {
    // M = 6 cannot certify the Nygaard kernels at N = 8
    let f = scratch("short.json", r#"{"p": 3, "N": 8, "M": 6, "bk": {"frobenius": [["-3", "1"]], "height": 1}}"#);
    let out = nkit(&["graded", "griffiths", &f]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(&out)["status"], "uncertified-precision");
}

#[test]
fn escalation() {
    let f = corpus("tri-p3-u-e4.json");
    let out = nkit(&["graded", &f, "--precision", "8", "--escalate", "12"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["results"]["escalate"]["stable"], true);
}

#[test]
fn golden_mode() {
    let f = corpus("diag-p5-1.json");
    let g = scratch("golden.json", "");
    assert_eq!(nkit(&["ht", &f, "--golden", &g, "--bless"]).status.code(), Some(0));
    assert_eq!(nkit(&["ht", &f, "--golden", &g]).status.code(), Some(0));
    assert_eq!(nkit(&["ht", &f, "--seed", "3", "--golden", &g]).status.code(), Some(1));
}

#[test]
fn selftest_without_file() {
    let out = nkit(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(&out)["results"]["selftest"]["pass"], true);
}

#[test]
fn echo_round_trips() {
    let out = nkit(&["ht", &corpus("diag-p3-0-1.json")]);
    let echo = serde_json::to_vec(&report(&out)["input"]).unwrap();
    let doc = nkit_cli::doc::parse(&echo).unwrap();
    assert_eq!(nkit_cli::doc::parse_value(&doc.to_json()).unwrap(), doc);
}
