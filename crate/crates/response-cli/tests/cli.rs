//! End-to-end tests of the `response` binary: exit codes, determinism of
//! the JSON/CSV outputs, shorthand flags, and the environment cap.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_response"));
    cmd.env_remove("RESPONSE_SOLVER_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn stdout_str(out: &Output) -> &str {
    std::str::from_utf8(&out.stdout).expect("stdout should be UTF-8")
}

fn stderr_str(out: &Output) -> &str {
    std::str::from_utf8(&out.stderr).expect("stderr should be UTF-8")
}

fn parse_json(out: &Output) -> serde_json::Value {
    serde_json::from_str(stdout_str(out)).expect("stdout should be one JSON document")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SOLVE_CONFIG: &str = r#"{
    "alpha": {"kind": "golden"},
    "model": {
        "goth_n": 3,
        "g": [1.0],
        "f": [{"nu": [1, 0], "re": 0.5}, {"nu": [0, 1], "re": 0.5}],
        "xi": 4.0
    },
    "solve": {"epsilon": 1e-3, "n_modes": 8}
}"#;

#[test]
fn classify_golden_shorthand_is_deterministic() {
    let first = run(&["classify", "--alpha", "golden"]);
    assert!(first.status.success(), "stderr: {}", stderr_str(&first));
    let second = run(&["classify", "--alpha", "golden"]);
    assert_eq!(first.stdout, second.stdout, "reports must be byte-identical");
    let v = parse_json(&first);
    assert_eq!(v["command"], "classify");
    assert!(v["threads_cap"].is_null());
    let rows = v["result"]["convergents"].as_array().unwrap();
    assert_eq!(rows.len(), 20);
    // Golden denominators: 1, 2, 3, 5, 8, …
    let qs: Vec<&str> = rows.iter().take(5).map(|r| r["q"].as_str().unwrap()).collect();
    assert_eq!(qs, ["1", "2", "3", "5", "8"]);
}

#[test]
fn quotients_shorthand_matches_golden_arithmetic() {
    let out = run(&["classify", "--quotients", "1,1"]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let v = parse_json(&out);
    let rows = v["result"]["convergents"].as_array().unwrap();
    assert_eq!(rows[4]["q"], "8");
    assert_eq!(v["config"]["alpha"]["kind"], "quotients");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = write_config(dir.path(), "bad.json", "{ not json");
    let out = run(&["classify", "--config", &bad_json]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("error:"));

    let unknown_key = write_config(
        dir.path(),
        "unknown.json",
        r#"{"alpha": {"kind": "golden"}, "extra": 1}"#,
    );
    let out = run(&["classify", "--config", &unknown_key]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("extra"));

    let out = run(&["classify", "--config", "/nonexistent/path.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["classify", "--alpha", "cube-root-of-two"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("cube-root-of-two"));

    // A frequency is required from somewhere.
    let out = run(&["classify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("--alpha"));
}

#[test]
fn admissible_writes_the_interval_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "adm.json",
        r#"{"alpha": {"kind": "golden"}, "budget": {"eta0": 1e-4, "n_max": 4}}"#,
    );
    let csv_path = dir.path().join("intervals.csv");
    let out = run(&[
        "admissible",
        "--config",
        &config,
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let v = parse_json(&out);
    assert_eq!(v["result"]["hole_count"], 1);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("lower,upper,n,hole_to_next\n"));
    assert_eq!(csv.lines().count(), 3, "two merged runs across one gap:\n{csv}");

    // Determinism of the artifact.
    let again = run(&[
        "admissible",
        "--config",
        &config,
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.stdout, again.stdout);
    assert_eq!(csv, std::fs::read_to_string(&csv_path).unwrap());
}

#[test]
fn solve_reports_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "solve.json", SOLVE_CONFIG);
    let first = run(&["solve", "--config", &config]);
    assert!(first.status.success(), "stderr: {}", stderr_str(&first));
    let second = run(&["solve", "--config", &config]);
    assert_eq!(first.stdout, second.stdout);
    let v = parse_json(&first);
    assert!(v["result"]["solve"]["range_residual"].as_f64().unwrap() < 1e-10);
    assert!(v["result"]["solve"]["zeta"].as_f64().unwrap().abs() < 1e-6);

    // A bracket that excludes the balance root: exit 3.
    let no_bracket = write_config(
        dir.path(),
        "nobracket.json",
        &SOLVE_CONFIG.replace(
            r#""solve": {"epsilon": 1e-3, "n_modes": 8}"#,
            r#""solve": {"epsilon": 1e-3, "n_modes": 8, "zeta_bracket": [0.5, 1.0]}"#,
        ),
    );
    let out = run(&["solve", "--config", &no_bracket]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_str(&out).contains("no sign change"));

    // Unreachable residual target: exit 4.
    let starved = write_config(
        dir.path(),
        "starved.json",
        &SOLVE_CONFIG.replace(
            r#""solve": {"epsilon": 1e-3, "n_modes": 8}"#,
            r#""solve": {"epsilon": 1e-3, "n_modes": 8, "tol_range": 1e-30}"#,
        ),
    );
    let out = run(&["solve", "--config", &starved]);
    assert_eq!(out.status.code(), Some(4));

    // No solve section and no --eps: exit 2.
    let modelonly = write_config(
        dir.path(),
        "modelonly.json",
        r#"{
            "alpha": {"kind": "golden"},
            "model": {
                "goth_n": 3,
                "g": [1.0],
                "f": [{"nu": [1, 0], "re": 0.5}, {"nu": [0, 1], "re": 0.5}],
                "xi": 4.0
            }
        }"#,
    );
    let out = run(&["solve", "--config", &modelonly]);
    assert_eq!(out.status.code(), Some(2));

    // …but --eps fills the gap.
    let out = run(&["solve", "--config", &modelonly, "--eps", "1e-3"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_str(&out));
    let v = parse_json(&out);
    assert_eq!(v["result"]["solve_config"]["epsilon"].as_f64().unwrap(), 1e-3);
}

#[test]
fn trees_compares_against_the_oracle_and_respects_budget() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "trees.json", SOLVE_CONFIG);
    let csv_path = dir.path().join("coeffs.csv");
    let out = run(&[
        "trees",
        "--config",
        &config,
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let v = parse_json(&out);
    assert_eq!(v["result"]["budget_exceeded"], false);
    assert!(v["result"]["max_abs_diff"].as_f64().unwrap() <= 1e-12);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("k,nu1,nu2,re,im,oracle_re,oracle_im,abs_diff\n"));
    // 7 orders × 4 modes of forcing support.
    assert_eq!(csv.lines().count(), 1 + 7 * 4);

    // A starved enumeration budget truncates the table and exits 5.
    let tiny = write_config(
        dir.path(),
        "tiny.json",
        &SOLVE_CONFIG.replace(
            r#""alpha": {"kind": "golden"},"#,
            r#""alpha": {"kind": "golden"}, "budget": {"tree_budget": 100},"#,
        ),
    );
    let out = run(&["trees", "--config", &tiny]);
    assert_eq!(out.status.code(), Some(5));
    let v = parse_json(&out);
    assert_eq!(v["result"]["budget_exceeded"], true);
    assert!(!v["result"]["rows"].as_array().unwrap().is_empty());
}

#[test]
fn threads_cap_env_is_validated_and_echoed() {
    let out = bin()
        .args(["classify", "--alpha", "golden"])
        .env("RESPONSE_SOLVER_THREADS", "4")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = parse_json(&out);
    assert_eq!(v["threads_cap"], 4);

    let out = bin()
        .args(["classify", "--alpha", "golden"])
        .env("RESPONSE_SOLVER_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("RESPONSE_SOLVER_THREADS"));

    let out = bin()
        .args(["classify", "--alpha", "golden"])
        .env("RESPONSE_SOLVER_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_redirects_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("report.json");
    let out = run(&[
        "classify",
        "--alpha",
        "golden",
        "--out",
        json_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty(), "report should go to the file only");
    let text = std::fs::read_to_string(&json_path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["command"], "classify");

    // classify has no CSV artifact: the flag is noted, nothing is written.
    let csv_path = dir.path().join("none.csv");
    let out = run(&[
        "classify",
        "--alpha",
        "golden",
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(stderr_str(&out).contains("no CSV artifact"));
    assert!(!csv_path.exists());
}

#[test]
fn gothn_shorthand_overrides_the_budget_order() {
    let out = run(&["classify", "--alpha", "golden", "--gothn", "5"]);
    assert!(out.status.success(), "stderr: {}", stderr_str(&out));
    let v = parse_json(&out);
    assert_eq!(v["result"]["goth_n"], 5);
    assert_eq!(v["config"]["budget"]["goth_n"], 5);
}
