//! End-to-end runs of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

use metastab::io::{Diagnostic, Report};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metastab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Report {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    Report::from_json(&String::from_utf8(out.stdout.clone()).unwrap()).unwrap()
}

fn diagnostic(out: &Output, code: i32, kind: &str) -> Diagnostic {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    let d: Diagnostic = serde_json::from_slice(&out.stdout).expect("diagnostic is JSON");
    assert_eq!(d.exit_code, code);
    assert_eq!(d.error, kind, "{}", d.message);
    assert!(!out.stderr.is_empty());
    d
}

fn without_timing(out: &Output) -> String {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .filter(|l| !l.contains("elapsed_seconds"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const CYCLE: &str = r#"
name = "cycle"
grid = [10, 32, 100, 316]
states = ["a", "b", "c"]

[[rates]]
from = "a"
to = "b"
rate = "1"

[[rates]]
from = "b"
to = "c"
rate = "N"

[[rates]]
from = "c"
to = "a"
rate = "1"
"#;

#[test]
fn reports_are_reproducible() {
    for args in [
        &["valley", "--family", "ex2"][..],
        &["tunneling", "--family", "ex7"],
        &["capacities", "--family", "ex5", "--pair", "3/5"],
        &[
            "simulate", "--family", "ex6", "--N", "100", "--reps", "2000", "--seed", "4",
        ],
    ] {
        let a = run(args);
        let b = run(args);
        report(&a);
        assert_eq!(without_timing(&a), without_timing(&b), "{args:?}");
    }
}

#[test]
fn valley_report_contents() {
    let r = report(&run(&["valley", "--family", "ex2", "--mode", "reversible"]));
    assert_eq!(r.meta.command, "valley");
    let depths = r.result["depth"]["values"].as_array().unwrap();
    assert_eq!(depths.len(), 5);
    assert!(depths.iter().all(|d| (d.as_f64().unwrap() - 2.0).abs() < 1e-10));
    let narrow = report(&run(&[
        "valley",
        "--family",
        "ex2",
        "--well=-1",
        "--basin=-1",
        "--xi=-1",
    ]));
    assert!(narrow.result["depth"]["values"]
        .as_array()
        .unwrap()
        .iter()
        .all(|d| d.as_f64() == Some(1.0)));
}

#[test]
fn tunneling_limits_for_three_wells() {
    let r = report(&run(&["tunneling", "--family", "ex7", "--theta", "N"]));
    let limits: Vec<Vec<f64>> = serde_json::from_value(r.result["limit_rates"].clone()).unwrap();
    assert!((limits[0][1] - 0.5).abs() < 5e-3);
    assert!((limits[1][2] - 0.5).abs() < 5e-3);
    assert!((limits[2][1] - 0.5).abs() < 5e-3);
    assert_eq!(r.result["inaccessible"], serde_json::json!([1]));
}

#[test]
fn tables_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let tables = dir.path().join("tables");
    let o = run(&[
        "tunneling",
        "--family",
        "ex5",
        "--out",
        out.to_str().unwrap(),
        "--tables",
        tables.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let r = Report::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.meta.tool, "metastab");
    let csvs: Vec<_> = std::fs::read_dir(&tables)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert!(!csvs.is_empty());
}

#[test]
fn family_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "cycle.toml", CYCLE);
    let r = report(&run(&[
        "valley", "--file", &path, "--well", "a", "--basin", "a,b", "--xi", "a",
    ]));
    assert_eq!(r.input["family"]["name"], Value::from("cycle"));
    let o = run(&[
        "valley",
        "--file",
        &path,
        "--well",
        "a",
        "--basin",
        "a,b",
        "--xi",
        "a",
        "--mode",
        "reversible",
    ]);
    diagnostic(&o, 3, "ModeMismatch");
}

#[test]
fn identities_pass_on_reversible_builtins() {
    for family in ["ex2", "ex5", "ex7", "torus2"] {
        let r = report(&run(&["identities", "--family", family, "--N", "30"]));
        let rows = r.result["rows"].as_array().unwrap();
        assert!(!rows.is_empty());
        assert!(
            rows.iter().all(|row| row["residual"].as_f64().unwrap() <= 1e-8),
            "{family}"
        );
    }
}

#[test]
fn verify_example_exit_codes() {
    let ok = report(&run(&["verify-example", "--family", "ex5"]));
    assert_eq!(ok.result["passed"], Value::Bool(true));
    let o = run(&["verify-example", "--family", "ex9"]);
    diagnostic(&o, 2, "InvalidInput");
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<(Vec<String>, &str)> = vec![
        (vec!["valley".into(), "--family".into(), "nope".into()], "InvalidInput"),
        (vec!["valley".into()], "InvalidInput"),
        (vec!["frobnicate".into()], "UsageError"),
        (
            vec![
                "valley".into(),
                "--family".into(),
                "ex2".into(),
                "--well".into(),
                "7".into(),
            ],
            "UnknownState",
        ),
        (
            vec![
                "valley".into(),
                "--family".into(),
                "ex2".into(),
                "--N".into(),
                "abc".into(),
            ],
            "UsageError",
        ),
        (
            vec![
                "tunneling".into(),
                "--family".into(),
                "ex5".into(),
                "--wells".into(),
                "3,4;4,5".into(),
                "--attractors".into(),
                "3,5".into(),
            ],
            "OverlappingSets",
        ),
        (vec!["valley".into(), "--family".into(), "ex6".into()], "SimulationOnly"),
        (
            vec![
                "valley".into(),
                "--family".into(),
                "ex2".into(),
                "--tol".into(),
                "-1".into(),
            ],
            "InvalidInput",
        ),
        (
            vec![
                "valley".into(),
                "--family".into(),
                "ex2".into(),
                "--n-grid".into(),
                "10,-20".into(),
            ],
            "InvalidInput",
        ),
        (
            vec![
                "simulate".into(),
                "--family".into(),
                "ex6".into(),
                "--reps".into(),
                "10".into(),
            ],
            "TooFewSamples",
        ),
        (
            vec![
                "valley".into(),
                "--file".into(),
                write(
                    dir.path(),
                    "neg.toml",
                    &CYCLE.replace("rate = \"N\"", "rate = \"1 - N\""),
                ),
            ],
            "NegativeRate",
        ),
        (
            vec![
                "valley".into(),
                "--file".into(),
                write(dir.path(), "bad.toml", &CYCLE.replace("rate = \"N\"", "rate = \"N^\"")),
            ],
            "ParseError",
        ),
        (
            vec![
                "valley".into(),
                "--file".into(),
                write(dir.path(), "red.toml", &CYCLE.replace("to = \"a\"", "to = \"b\"")),
                "--well=a".into(),
                "--basin=a".into(),
                "--xi=a".into(),
            ],
            "NotIrreducible",
        ),
        (
            vec![
                "valley".into(),
                "--file".into(),
                dir.path().join("missing.toml").to_str().unwrap().into(),
            ],
            "Io",
        ),
    ];
    for (args, kind) in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let d = diagnostic(&run(&refs), 2, kind);
        assert!(!d.message.is_empty());
    }
}

#[test]
fn short_grids_are_inconclusive() {
    let r = report(&run(&["valley", "--family", "ex2", "--n-grid", "10,20"]));
    assert_eq!(r.result["depth"]["verdict"], Value::from("inconclusive"));
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.toml", &CYCLE.replace("rate = \"N\"", "rate = \"N +\""));
    let d = diagnostic(&run(&["valley", "--file", &path]), 2, "ParseError");
    assert!(d.message.contains("line 14"), "{}", d.message);
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let v = run(&["--version"]);
    assert!(String::from_utf8_lossy(&v.stdout).contains(metastab::VERSION));
}
