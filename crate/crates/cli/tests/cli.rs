use std::path::Path;
use std::process::{Command, Output};

use fairknn::experiment::{ExperimentConfig, QueryRow, REPORT_FILE, SUMMARY_FILE, TIMINGS_FILE};

fn fairknn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairknn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = fairknn(args);
    assert!(
        out.status.success(),
        "fairknn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn table1() -> String {
    format!("{}/../core/tests/data/table1.csv", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn build_then_query_table1() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("t1.fki");
    let data = table1();
    let built = ok(&["build", "--dataset", &data, "--out", s(&index)]);
    assert!(built.contains("indexed 10 records"), "{built}");
    let out = ok(&[
        "query",
        "--dataset",
        &data,
        "--index",
        s(&index),
        "--vector",
        "0,0",
        "--constraint",
        "gender=Female:2,Male:1",
        "--constraint",
        "age=<30:1,30-50:1,>50:1",
    ]);
    assert!(out.contains("status: feasible"), "{out}");
    assert!(out.contains("solver: Flow"), "{out}");
}

#[test]
fn query_reports_unknown_names_and_missing_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("t1.fki");
    let data = table1();
    ok(&["build", "--dataset", &data, "--out", s(&index)]);
    let base = ["query", "--dataset", &data, "--index", s(&index), "--vector", "0,0"];
    let bad = fairknn(&[&base[..], &["--constraint", "colour=Red:1"]].concat());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown attribute"));
    let none = fairknn(&[&base[..], &["--constraint", "race=Indigenous:1", "--constraint", "age=<30:1"]].concat());
    assert_eq!(none.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&none.stdout).contains("infeasible"));
}

#[test]
fn index_for_other_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let index = dir.path().join("a.fki");
    let b = dir.path().join("b.bin");
    ok(&["gen", "synthetic", "--n", "300", "--dim", "4", "--tight-size", "10", "--seed", "1", "--out", s(&a)]);
    ok(&["gen", "synthetic", "--n", "300", "--dim", "4", "--tight-size", "10", "--seed", "2", "--out", s(&b)]);
    ok(&["build", "--dataset", s(&a), "--out", s(&index)]);
    let out = fairknn(&[
        "query", "--dataset", s(&b), "--index", s(&index), "--vector", "0,0,0,0", "--constraint", "a0=v0:1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different dataset"));
}

#[test]
fn three_dm_spec_file_query() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("m.csv");
    let spec = dir.path().join("spec.json");
    let index = dir.path().join("m.fki");
    ok(&[
        "gen", "3dm", "--k-elements", "6", "--extra-triples", "18", "--planted", "--out", s(&data), "--spec-out",
        s(&spec),
    ]);
    ok(&["build", "--dataset", s(&data), "--out", s(&index)]);
    let out = ok(&[
        "query", "--dataset", s(&data), "--index", s(&index), "--vector", "0,0,0,0", "--spec", s(&spec),
        "--quota-boost", "100",
    ]);
    assert!(out.contains("solver: Ilp"), "{out}");
}

#[test]
fn bench_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    let config = dir.path().join("c.toml");
    let report = dir.path().join("report");
    ok(&["gen", "synthetic", "--n", "1200", "--dim", "6", "--tight-size", "30", "--seed", "4", "--out", s(&data)]);
    let cfg = ExperimentConfig {
        k: 5,
        queries: 12,
        lsh_w: 6.0,
        seed: 4,
        ..ExperimentConfig::default()
    };
    std::fs::write(&config, cfg.to_toml()).unwrap();
    let summary = ok(&["bench", "--dataset", s(&data), "--config", s(&config), "--out", s(&report)]);
    assert!(summary.contains("fairknn"), "{summary}");
    for f in [REPORT_FILE, TIMINGS_FILE, SUMMARY_FILE] {
        assert!(report.join(f).exists(), "{f}");
    }
    let verified = ok(&["verify", "--dataset", s(&data), "--report", s(&report)]);
    assert!(verified.contains(": 0 problems"), "{verified}");

    // A tampered selection is caught.
    let text = std::fs::read_to_string(report.join(REPORT_FILE)).unwrap();
    let mut rows: Vec<QueryRow> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let row = rows.iter_mut().find(|r| r.success).unwrap();
    row.selected[0] = row.selected[1];
    let tampered: String = rows.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    std::fs::write(report.join(REPORT_FILE), tampered).unwrap();
    let out = fairknn(&["verify", "--dataset", s(&data), "--report", s(&report)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gen_queries_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.bin");
    let config = dir.path().join("c.toml");
    let queries = dir.path().join("q.jsonl");
    ok(&["gen", "synthetic", "--n", "500", "--dim", "4", "--out", s(&data)]);
    let cfg = ExperimentConfig {
        queries: 7,
        ..ExperimentConfig::default()
    };
    std::fs::write(&config, cfg.to_toml()).unwrap();
    ok(&["gen", "queries", "--dataset", s(&data), "--config", s(&config), "--out", s(&queries)]);
    let lines = std::fs::read_to_string(&queries).unwrap();
    assert_eq!(lines.lines().count(), 7);
}

#[test]
fn bad_config_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "k = 5\nnot_a_key = 1\n").unwrap();
    let out = fairknn(&["bench", "--dataset", &table1(), "--config", s(&config), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}
