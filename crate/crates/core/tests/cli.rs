use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdc-auction"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_table1_scenario_totals_26() {
    let out = bin(&[
        "run",
        "table1_scenario",
        "--mechanism",
        "repeated_srmra",
        "--expect",
        "total=26",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("round,utility,revenue,winners"));
    assert!(text.contains("total_utility,26"), "{text}");
}

#[test]
fn failed_expectation_exits_1() {
    let out = bin(&["replay", "table2", "--expect", "total=33"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn replay_reports_improvement() {
    let out = bin(&["replay", "table1", "table2"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("improvement 30.77% vs table1"));
}

#[test]
fn unknown_mechanism_exits_2() {
    let out = bin(&["run", "table1_scenario", "--mechanism", "vickrey"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_file_exits_2() {
    assert_eq!(bin(&["validate", "/nonexistent/scenario.json"]).status.code(), Some(2));
}

#[test]
fn seeded_run_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = bin(&["run", "default", "--seed", "7", "--out", path(out)]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    assert!(String::from_utf8(first).unwrap().contains("seed=7"));
}

#[test]
fn no_header_drops_comment_lines() {
    let out = bin(&["run", "table1_scenario", "--no-header"]);
    assert!(stdout(&out).starts_with("round,"));
}

#[test]
fn compare_gamma0_profile_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cmp.csv");
    let out = bin(&[
        "compare",
        "gamma0",
        "--seeds",
        "5",
        "--mechanism",
        "mafl,repeated_srmra",
        "--out",
        path(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("0.00%"), "{}", stdout(&out));
    let summary = std::fs::read_to_string(dir.path().join("cmp.summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(json["pairs"][0]["improvement_pct"].as_f64(), Some(0.0));
    assert_eq!(
        std::fs::read_to_string(&csv)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count(),
        1 + 5 * 2
    );
}

#[test]
fn gen_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.json");
    assert_eq!(
        bin(&["gen", "default", "--seed", "3", "--out", path(&file)])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(bin(&["validate", path(&file)]).status.code(), Some(0));
    let run = bin(&["run", path(&file), "--no-header"]);
    assert_eq!(run.status.code(), Some(0));
}

#[test]
fn negative_gamma_rejected() {
    assert_eq!(bin(&["run", "table1_scenario", "--gamma=-1"]).status.code(), Some(2));
}
