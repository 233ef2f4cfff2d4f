use std::path::Path;
use std::process::{Command, Output};

use carpenter_core::cli::read_csv;
use serde_json::Value;

fn carpenter(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carpenter"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, json: &str) -> String {
    let path = dir.join("spec.json");
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn classify_third_exits_two_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[0.3333333333333333]}"#);
    let out = carpenter(&["classify", "--input", &spec], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "Infeasible");
    assert!((report["a_minus_b"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn classify_feasible_and_infinite() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[0.9],"tail":{"kind":"constant","c":0.4}}"#);
    let out = carpenter(&["classify", "--input", &spec], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdict"], "CaseII");
    assert_eq!(report["a"], "inf");
}

#[test]
fn build_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[0.25,0.25,0.75,0.75]}"#);
    let csv = dir.path().join("p.csv");
    let out = carpenter(&["build", "--input", &spec, "--output", csv.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_csv(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(m.dim(), 4);
    assert!((m.trace() - 2.0).abs() < 1e-12);
    let side: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.csv.report.json")).unwrap()).unwrap();
    assert_eq!(side["verification"]["pass"], true);
    assert_eq!(side["kind"], "exact");

    let text = std::fs::read_to_string(&csv).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.split(',').all(|f| !f.contains('e')), "{first}");
}

#[test]
fn build_json_format_and_full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[0.1,0.1,0.1,0.6,0.9,0.2]}"#);
    let out = carpenter(&["build", "--input", &spec, "--format", "json", "--pipeline", "full"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["rows"].as_array().unwrap().len(), 6);
    let side: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(side["moves"].as_u64().unwrap() > 0);
}

#[test]
fn build_infeasible_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[0.2,0.9]}"#);
    let out = carpenter(&["build", "--input", &spec], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!((report["a_minus_b"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert!(out.stdout.is_empty());
}

#[test]
fn stream_emits_rows_and_column_report() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[],"tail":{"kind":"constant","c":0.4}}"#);
    let rows = dir.path().join("rows.jsonl");
    let out = carpenter(
        &["stream", "--input", &spec, "--rows", "50", "--output", rows.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&rows).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 50);
    assert_eq!(lines[0]["support"], serde_json::json!([0, 2]));
    assert!(lines[0].get("block").is_none());

    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rows.jsonl.report.json")).unwrap()).unwrap();
    let cols = report["blocks"][0]["completed"].as_array().unwrap();
    assert!(!cols.is_empty());
    for c in cols {
        assert!((c["norm_sq"].as_f64().unwrap() - 0.4).abs() < 1e-12);
    }
}

#[test]
fn stream_multiple_blocks_tags_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[0.8,0.6],"tail":{"kind":"constant","c":0.3}}"#);
    let out = carpenter(&["stream", "--input", &spec, "--rows", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let blocks: Vec<u64> = text
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["block"].as_u64().unwrap())
        .collect();
    assert_eq!(blocks, vec![0, 0, 0, 1, 1, 1]);
}

#[test]
fn verify_and_oracle_commands() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[0.5,0.5]}"#);
    let good = dir.path().join("good.csv");
    std::fs::write(&good, "0.5,0.5\n0.5,0.5\n").unwrap();
    let out = carpenter(&["verify", "--input", &spec, "--matrix", good.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["estimated_rank"], 1);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.5,0\n0,0.5\n").unwrap();
    let out = carpenter(&["verify", "--input", &spec, "--matrix", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(3));

    let out = carpenter(&["oracle", "--n", "6", "--rank", "3", "--trials", "50", "--seed", "9"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], true);
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[0.5,"#);
    let out = carpenter(&["classify", "--input", &spec], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 1"), "{msg}");

    let out = carpenter(&["classify", "--input", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let spec = write_spec(dir.path(), r#"{"prefix":[1.5]}"#);
    assert_eq!(carpenter(&["classify", "--input", &spec], dir.path()).status.code(), Some(1));

    assert_eq!(carpenter(&["frobnicate"], dir.path()).status.code(), Some(1));

    let matrix = dir.path().join("m.csv");
    std::fs::write(&matrix, "1,0\n0,oops\n").unwrap();
    let spec = write_spec(dir.path(), r#"{"prefix":[1,0]}"#);
    let out = carpenter(&["verify", "--input", &spec, "--matrix", matrix.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2, column 2"));
}
