use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SPACE: &str =
    r#"{"nodes":[{"id":"a","m":1.0},{"id":"b","m":1.0}],"edges":[{"u":"a","v":"b","w":1.0}]}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weakgrad"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| fs::write(dir.path().join(name), text).unwrap();
    write("x2.json", SPACE);
    write("f.json", r#"{"a":0.0,"b":1.0}"#);
    write("f0.json", r#"{"a":1.0,"b":2.0}"#);
    write("family.json", r#"[["a","b"]]"#);
    write("da.json", r#"{"a":1.0,"b":0.0}"#);
    write("db.json", r#"{"a":0.0,"b":1.0}"#);
    dir
}

fn close(v: &Value, want: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() < 1e-8
}

#[test]
fn hopf_lax_two_point() {
    let dir = setup();
    let out = run(
        dir.path(),
        &[
            "hopf-lax", "--space", "x2.json", "--field", "f.json", "--p", "2", "--times", "1",
        ],
    );
    assert!(out.status.success());
    let v = json_of(&out);
    let ev = &v["evaluations"][0];
    assert!(close(&ev["q_values"]["b"], 0.5));
    assert!(close(&ev["d_minus"]["b"], 1.0));
    assert!(close(&ev["d_plus"]["b"], 1.0));
    assert_eq!(v["pass"], true);
}

#[test]
fn modulus_and_min_ug_two_point() {
    let dir = setup();
    let out = run(
        dir.path(),
        &[
            "modulus",
            "--space",
            "x2.json",
            "--family",
            "family.json",
            "--q",
            "2",
        ],
    );
    assert!(out.status.success());
    assert!(close(&json_of(&out)["value"], 2.0));

    let out = run(
        dir.path(),
        &[
            "min-ug", "--space", "x2.json", "--field", "f.json", "--q", "2",
        ],
    );
    assert!(out.status.success());
    let v = json_of(&out);
    assert!(close(&v["value"], 2.0));
    assert!(!v["generated_constraints"].as_array().unwrap().is_empty());
}

#[test]
fn wasserstein_with_dual() {
    let dir = setup();
    let out = run(
        dir.path(),
        &[
            "wasserstein",
            "--space",
            "x2.json",
            "--mu",
            "da.json",
            "--nu",
            "db.json",
            "--p",
            "2",
            "--dual",
        ],
    );
    assert!(out.status.success());
    let v = json_of(&out);
    assert!(close(&v["value"], 1.0));
    assert!(close(&v["dual"]["lower_bound"], 0.5));
}

#[test]
fn flow_trace_roundtrips_into_kuwada() {
    let dir = setup();
    let out = run(
        dir.path(),
        &[
            "flow",
            "--space",
            "x2.json",
            "--field",
            "f0.json",
            "--q",
            "2",
            "--tau",
            "0.05",
            "--steps",
            "10",
            "--trace",
            "trace.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(csv.starts_with("time,energy,mass,min,max,entropy,f_a,f_b"));
    assert_eq!(csv.lines().count(), 12);

    let out = run(
        dir.path(),
        &[
            "kuwada",
            "--trace",
            "trace.csv",
            "--p",
            "2",
            "--space",
            "x2.json",
        ],
    );
    let v = json_of(&out);
    assert_eq!(v["steps"].as_array().unwrap().len(), 10);
    // exit status mirrors the verdict
    assert_eq!(
        out.status.code(),
        Some(if v["pass"] == true { 0 } else { 1 })
    );
}

#[test]
fn kuwada_rejects_mismatched_space() {
    let dir = setup();
    fs::write(
        dir.path().join("trace.csv"),
        "time,energy,mass,min,max,entropy,f_a\n0,0,0,0,0,0,1\n",
    )
    .unwrap();
    let out = run(
        dir.path(),
        &[
            "kuwada",
            "--trace",
            "trace.csv",
            "--p",
            "2",
            "--space",
            "x2.json",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn suite_writes_reports() {
    let dir = setup();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"suite":"identification","seeds":[0],"sizes":[8,16],"exponents":[2.0]}"#,
    )
    .unwrap();
    let out = run(
        dir.path(),
        &[
            "suite",
            "identification",
            "--config",
            "cfg.json",
            "--out",
            "reports",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("reports/identification_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["schema_version"], "1.0");
    assert_eq!(report["summary"]["failed"], 0);

    let out = run(
        dir.path(),
        &[
            "suite",
            "identification",
            "--config",
            "cfg.json",
            "--out",
            "csv",
            "--format",
            "csv",
        ],
    );
    assert!(out.status.success());
    assert!(dir.path().join("csv/identification_summary.csv").exists());
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = setup();
    fs::write(dir.path().join("partial.json"), r#"{"a":0.0}"#).unwrap();
    let out = run(
        dir.path(),
        &[
            "min-ug",
            "--space",
            "x2.json",
            "--field",
            "partial.json",
            "--q",
            "2",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["suite", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"suite":"hj","seeds":[0],"sizes":[4],"exponents":[2.0]}"#,
    )
    .unwrap();
    let out = run(dir.path(), &["suite", "flow", "--config", "cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plan_checks_on_two_point() {
    let dir = setup();
    fs::write(
        dir.path().join("plan.json"),
        r#"{"atoms":[{"path":["a","b"],"weight":1.0}]}"#,
    )
    .unwrap();
    let out = run(
        dir.path(),
        &[
            "modulus",
            "--space",
            "x2.json",
            "--family",
            "family.json",
            "--q",
            "2",
            "--plan",
            "plan.json",
        ],
    );
    assert!(out.status.success());
    let v = json_of(&out);
    // pi(a->b) = 1 <= 1 * sqrt(2) * 1
    assert!(close(&v["plan"]["lhs"], 1.0));
    assert!(close(&v["plan"]["rhs"], 2f64.sqrt()));

    let out = run(
        dir.path(),
        &[
            "min-ug",
            "--space",
            "x2.json",
            "--field",
            "f.json",
            "--q",
            "2",
            "--plan",
            "plan.json",
        ],
    );
    assert!(out.status.success());
    let names: Vec<String> = json_of(&out)["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect();
    assert!(names.contains(&"weak_ug".to_string()));
}
