use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn bl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(args: &[&str]) -> (i32, String) {
    let out = bl(args);
    (
        out.status.code().expect("exit code"),
        String::from_utf8(out.stdout).expect("utf-8"),
    )
}

fn json_report(args: &[&str]) -> (i32, Value) {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    let (code, text) = run(&all);
    (code, serde_json::from_str(&text).expect("json report"))
}

fn validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

#[test]
fn young_constant() {
    let path = data("young.json");
    let (code, text) = run(&["constant", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(text.contains("BL_g = 0.866025"), "{text}");
    let (code, report) = json_report(&["constant", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v = report["result"]["blg_value"].as_f64().unwrap();
    assert!((v - 0.75f64.sqrt()).abs() < 1e-9);
}

#[test]
fn three_vector_polytope() {
    let path = data("three-vectors.json");
    let (code, report) = json_report(&["polytope", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let mut vertices: Vec<Vec<u64>> = report["result"]["vertices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect())
        .collect();
    vertices.sort();
    assert_eq!(vertices, vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]]);
    let (_, text) = run(&["polytope", path.to_str().unwrap()]);
    for v in ["(1, 1, 0)", "(0, 1, 1)", "(1, 0, 1)"] {
        assert!(text.contains(v), "{text}");
    }
}

#[test]
fn small_budget_is_undetermined() {
    let path = data("random8.json");
    let (code, report) = json_report(&["finiteness", path.to_str().unwrap(), "--budget", "small"]);
    assert_eq!(code, 2);
    assert_eq!(report["status"], "Undetermined");
    assert!(report["result"]["budget"]["candidates_examined"].as_u64().unwrap() > 0);
    assert_eq!(report["settings"]["budget"]["preset"], "small");
}

#[test]
fn infinite_verdict_prints_witness_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    // Two maps see the same line, which then carries exponent 1.5 > 1.
    std::fs::write(
        &path,
        r#"{"dim": 2, "maps": [
            {"matrix": [[1, 0]], "exponent": 0.75},
            {"matrix": [[2, 0]], "exponent": 0.75},
            {"matrix": [[0, 1]], "exponent": 0.5}]}"#,
    )
    .unwrap();
    let (code, text) = run(&["finiteness", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(text.contains("status: ProvenInfinite"), "{text}");
    assert!(text.contains("witness basis row 1:"), "{text}");
    assert!(text.contains("witness subset: [1, 2]"), "{text}");
}

#[test]
fn heatflow_writes_csv_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let plot = dir.path().join("trace.gp");
    let spec = data("extension.json");
    let (code, text) = run(&[
        "heatflow",
        spec.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--plot",
        plot.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("status: MonotonePass"));
    let body = std::fs::read_to_string(&csv).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("t,Q,error_bound"));
    assert_eq!(lines.count(), 25);
    assert!(std::fs::read_to_string(&plot).unwrap().contains(csv.to_str().unwrap()));
}

#[test]
fn non_log_concave_kernels_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.json");
    std::fs::write(
        &path,
        r#"{"kind": "log_concave", "p": 2, "mass": {"points": [[0]]},
            "kernel": {"tabulated": {"x": [-2, -1, 0, 1, 2], "values": [0.01, 1, 0.5, 1, 0.01]}}}"#,
    )
    .unwrap();
    let out = bl(&["heatflow", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("log-concave"));
}

#[test]
fn parse_errors_name_the_json_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"dim": 2, "maps": [{"matrix": [[1, 0]], "exponent": "x"}]}"#).unwrap();
    let out = bl(&["constant", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("$.maps[0].exponent"));
}

#[test]
fn unknown_verbs_and_flags_are_rejected() {
    let path = data("young.json");
    let out = bl(&["frobnicate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = bl(&["constant", path.to_str().unwrap(), "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn degenerate_solve_is_definitive() {
    let path = data("young-edge.json");
    let (code, report) = json_report(&["constant", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(report["status"], "Degenerated");
    assert!(report["result"]["degeneration_subspace"].is_array());
}

#[test]
fn structure_of_loomis_whitney() {
    let path = data("loomis-whitney.json");
    let (code, text) = run(&["structure", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("critical subspace: dim"));
    assert!(text.contains("extremisability: Extremisable"));
}

#[test]
fn out_flag_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let path = data("young.json");
    let (code, stdout) = run(&[
        "constant",
        path.to_str().unwrap(),
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["verb"], "constant");
}

#[test]
fn reports_are_deterministic_and_match_the_schema() {
    let schema = validator();
    let cases: &[(&str, &str, &[&str])] = &[
        ("validate", "young.json", &[]),
        ("finiteness", "loomis-whitney.json", &[]),
        ("finiteness", "random8.json", &["--budget", "small"]),
        ("constant", "young.json", &[]),
        ("constant", "young-edge.json", &[]),
        ("extremiser", "random8.json", &["--seed", "3"]),
        ("structure", "young-edge.json", &[]),
        ("polytope", "three-vectors.json", &[]),
        ("heatflow", "extension.json", &[]),
        ("heatflow", "sliding-exponential.json", &[]),
    ];
    for (verb, file, extra) in cases {
        let path = data(file);
        let mut args = vec![*verb, path.to_str().unwrap(), "--format", "json"];
        args.extend_from_slice(extra);
        let first = bl(&args);
        let second = bl(&args);
        assert_eq!(first.stdout, second.stdout, "{verb} {file} is not deterministic");
        let report: Value = serde_json::from_slice(&first.stdout).unwrap();
        let errors: Vec<String> = schema.iter_errors(&report).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{verb} {file}: {errors:?}");
        assert_eq!(report["exit_code"].as_i64(), first.status.code().map(i64::from));
    }
}
