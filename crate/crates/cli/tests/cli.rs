use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCHEMA: &str = r#"
[[attributes]]
name = "age"
kind = "numeric"
lower = 0
upper = 99

[[attributes]]
name = "smoker"
kind = "categorical"
values = ["no", "yes"]
"#;

fn write_inputs(dir: &Path) {
    fs::write(dir.join("schema.toml"), SCHEMA).unwrap();
    let mut csv = String::from("age,smoker,unused\n");
    for (i, age) in [31, 45, 45, 60, 18, 77, 31, 52].iter().enumerate() {
        let smoker = if i % 3 == 0 { "yes" } else { "no" };
        csv.push_str(&format!("{age},{smoker},x\n"));
    }
    fs::write(dir.join("data.csv"), csv).unwrap();
}

fn lsleak(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsleak"))
        .current_dir(dir)
        .args(args)
        .args(["--dataset", "data.csv", "--schema", "schema.toml"])
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn reconstruct_writes_report_and_attribute_table() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = lsleak(dir.path(), &["reconstruct", "--k", "2", "--seed", "3", "--out", "report.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("exact: true"), "{}", stdout(&out));

    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["exact"], true);
    assert_eq!(report["dataset_size"], 8);
    assert_eq!(report["budget_spent"], report["ledger_spent"]);
    let table = fs::read_to_string(dir.path().join("report.attributes.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "attribute,distinct_values,protected_queries,unprotected_queries,exact");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("age,"));
}

#[test]
fn hardened_defense_falls_to_variance_detector() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = lsleak(dir.path(), &["column", "--attr", "age", "--defense", "hardened", "--detector", "variance:1000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("exact: true"), "{}", stdout(&out));
}

#[test]
fn targeted_attacks_answer() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = lsleak(dir.path(), &["uniqueness", "--target", "age=60"]);
    assert!(stdout(&out).contains("unique: true"), "{}", stdout(&out));
    let out = lsleak(dir.path(), &["membership", "--target", "age=46"]);
    assert!(stdout(&out).contains("present: false"), "{}", stdout(&out));
    let out = lsleak(dir.path(), &["infer", "--target", "age=60", "--attr", "smoker", "--unique"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("smoker"), "{}", stdout(&out));
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = lsleak(dir.path(), &["reconstruct", "--k", "5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = lsleak(dir.path(), &["column", "--attr", "height"]);
    assert!(!out.status.success());
    let out = lsleak(dir.path(), &["reconstruct", "--detector", "sometimes"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_needs_no_dataset() {
    let out = Command::new(env!("CARGO_BIN_EXE_lsleak"))
        .args(["simulate", "--m", "100", "--trials", "20000", "--seed", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("accuracy"), "{}", stdout(&out));
}

#[test]
fn negative_control_does_not_recover() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = lsleak(dir.path(), &["negative-control", "--k", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("exact: false"), "{}", stdout(&out));
}
