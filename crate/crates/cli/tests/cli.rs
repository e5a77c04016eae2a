//! End-to-end tests of the command-line interface: exit codes, report
//! shapes, byte-stable determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metrizer"))
}

fn write_spec(dir: &tempfile::TempDir, name: &str, content: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn parse_stdout(output: &Output) -> Value {
    assert!(
        output.status.success(),
        "command failed: {}\n{}",
        output.status,
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is a JSON document")
}

const FLAT: &str = r#"{ "dim": 2, "spray": ["0", "0"], "energy": "0.5*(y1^2 + y2^2)" }"#;

const SQRT_PROFILE: &str = r#"{
  "dim": 2,
  "spray": [
    "y1^2*a*sqrt((y2/y1)^2 + b*(y2/y1) + c)",
    "y1*y2*a*sqrt((y2/y1)^2 + b*(y2/y1) + c)"
  ],
  "params": { "a": 1.0, "b": 1.0, "c": 1.0 }
}"#;

const LIFTED: &str = r#"{
  "dim": 2,
  "spray": ["y1*sqrt(y1^2 + y2^2)", "x1*y1*sqrt(y1^2 + y2^2)"]
}"#;

#[test]
fn analyze_flat_spray_passes_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "flat.json", FLAT);
    let output = run(&["analyze", spec.to_str().unwrap()]);
    let report = parse_stdout(&output);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["verdicts"]["finsler"]["outcome"], "necessary-conditions-pass");
    assert_eq!(report["verdicts"]["landsberg"]["outcome"], "necessary-conditions-pass");
    assert_eq!(report["holonomy"]["stable_rank"], 2);
    assert_eq!(report["energy"]["tables"]["euler_lagrange"]["pass"], true);
    // polynomial data carries no chart caveat, but a passing verdict states
    // that PD feasibility is per base point
    assert_eq!(report["notes"].as_array().unwrap().len(), 0);
    let diags = report["verdicts"]["finsler"]["diagnostics"].as_array().unwrap();
    assert!(diags.iter().any(|d| d.as_str().unwrap().contains("sampled base points only")));
}

#[test]
fn analyze_sqrt_profile_reports_rank_obstruction_with_exit_zero() {
    // an obstructed verdict is a completed analysis, not a failure
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "profile.json", SQRT_PROFILE);
    let output = run(&["analyze", spec.to_str().unwrap()]);
    let report = parse_stdout(&output);
    assert_eq!(report["verdicts"]["landsberg"]["outcome"], "obstructed");
    assert_eq!(report["verdicts"]["landsberg"]["fired_tests"][0]["name"], "full-rank");
    assert_eq!(report["landsberg"]["stable_rank"], 4);
    // the square root in the profile triggers the chart caveat
    let notes = report["notes"].as_array().unwrap();
    assert!(notes.iter().any(|n| n.as_str().unwrap().contains("charts away")));
}

#[test]
fn out_of_range_coordinate_is_a_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "bad.json", r#"{ "dim": 2, "spray": ["y3", "0"] }"#);
    let output = run(&["analyze", spec.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("out of range"), "diagnostic missing: {stderr}");
}

#[test]
fn arity_mismatch_and_bad_json_are_spec_errors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "arity.json", r#"{ "dim": 2, "spray": ["0"] }"#);
    assert_eq!(run(&["analyze", spec.to_str().unwrap()]).status.code(), Some(2));
    let spec = write_spec(&dir, "nonjson.json", "dim: 2");
    assert_eq!(run(&["analyze", spec.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["analyze", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn inhomogeneous_spray_is_a_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "cubic.json", r#"{ "dim": 2, "spray": ["y1^3", "0"] }"#);
    let output = run(&["analyze", spec.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("homogeneity"));
}

#[test]
fn singular_sampling_exhaustion_exits_three() {
    // a spray with a log that is negative on the whole default box
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        &dir,
        "singular.json",
        r#"{ "dim": 2, "spray": ["y1^2*log(0 - y2/y1)", "0"] }"#,
    );
    let output = run(&["analyze", spec.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn out_flag_writes_the_report_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "flat.json", FLAT);
    let out = dir.path().join("report.json");
    let output = run(&["analyze", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(output.status.success());
    assert!(output.stdout.is_empty());
    let report: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
}

#[test]
fn reports_are_byte_stable_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "flat.json", FLAT);
    let a = run(&["analyze", spec.to_str().unwrap()]);
    let b = run(&["analyze", spec.to_str().unwrap()]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout, "reports drifted between identical runs");
}

#[test]
fn echoed_spec_reparses_to_the_same_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "flat.json", FLAT);
    let report = parse_stdout(&run(&["analyze", spec.to_str().unwrap()]));
    let echo = serde_json::to_string(&report["spec"]).unwrap();
    let spec2 = write_spec(&dir, "echo.json", &echo);
    let report2 = parse_stdout(&run(&["analyze", spec2.to_str().unwrap()]));
    assert_eq!(report["config_hash"], report2["config_hash"]);
    assert_eq!(report["verdicts"], report2["verdicts"]);
}

#[test]
fn check_energy_reports_residual_tables() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "flat.json", FLAT);
    let report = parse_stdout(&run(&["check-energy", spec.to_str().unwrap()]));
    for table in [
        "homogeneity",
        "euler_lagrange",
        "horizontal",
        "curvature_bracket",
        "curvature_berwald",
        "metric_compat",
        "reduction_identity",
    ] {
        assert_eq!(report["energy"]["tables"][table]["pass"], true, "table {table}");
    }
    assert_eq!(
        report["energy"]["fundamental_tensor"]["positive_definite_everywhere"],
        true
    );
}

#[test]
fn check_energy_accepts_the_metric_geodesic_pair() {
    // geodesic spray of g = exp(2 x1) (dx1^2 + dx2^2) with its own energy
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        &dir,
        "metric.json",
        r#"{
          "dim": 2,
          "spray": ["y2^2 - y1^2", "-2*y1*y2"],
          "energy": "0.5*exp(2*x1)*(y1^2 + y2^2)"
        }"#,
    );
    let report = parse_stdout(&run(&["check-energy", spec.to_str().unwrap()]));
    for table in ["homogeneity", "euler_lagrange", "horizontal", "metric_compat"] {
        assert_eq!(report["energy"]["tables"][table]["pass"], true, "table {table}");
        let rel = report["energy"]["tables"][table]["max_rel"].as_f64().unwrap();
        assert!(rel <= 1e-9, "{table} residual {rel}");
    }
    assert_eq!(
        report["energy"]["fundamental_tensor"]["positive_definite_everywhere"],
        true
    );
}

#[test]
fn check_energy_flags_indefinite_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        &dir,
        "sig.json",
        r#"{ "dim": 2, "spray": ["0", "0"], "energy": "0.5*(y1^2 - y2^2)" }"#,
    );
    let report = parse_stdout(&run(&["check-energy", spec.to_str().unwrap()]));
    // operator residuals vanish but the tensor has signature (1, 1)
    assert_eq!(report["energy"]["tables"]["euler_lagrange"]["pass"], true);
    assert_eq!(
        report["energy"]["fundamental_tensor"]["positive_definite_everywhere"],
        false
    );
}

#[test]
fn check_energy_without_energy_is_a_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "noe.json", r#"{ "dim": 2, "spray": ["0", "0"] }"#);
    let output = run(&["check-energy", spec.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn distribution_dump_prints_generators_and_witness() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "lifted.json", LIFTED);
    let report = parse_stdout(&run(&[
        "distribution",
        spec.to_str().unwrap(),
        "--which",
        "landsberg",
    ]));
    assert_eq!(report["which"], "landsberg");
    let generators = report["distribution"]["generators"].as_array().unwrap();
    assert!(!generators.is_empty());
    assert!(generators[0].as_str().unwrap().contains("d/dx1"));
    let witness = report["distribution"]["vertical_lift_witness"].as_str().unwrap();
    assert!(witness.contains("d/dy1"), "witness should be printed, got {witness}");
}

#[test]
fn distribution_dump_for_flat_holonomy() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "flat.json", FLAT);
    let report = parse_stdout(&run(&[
        "distribution",
        spec.to_str().unwrap(),
        "--which",
        "holonomy",
    ]));
    assert_eq!(report["distribution"]["generator_count"], 2);
    assert_eq!(report["distribution"]["stable_rank"], 2);
}

#[test]
fn jet_command_reports_feasibility_at_a_point() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(&dir, "flat.json", FLAT);
    let report = parse_stdout(&run(&[
        "jet",
        spec.to_str().unwrap(),
        "--point",
        "0,0;1,1",
    ]));
    assert_eq!(report["finsler"]["found"], true);
    assert_eq!(report["landsberg"]["found"], true);
    assert!(report["finsler"]["datum"].is_array());

    let bad = run(&["jet", spec.to_str().unwrap(), "--point", "0,0;0,0"]);
    assert_eq!(bad.status.code(), Some(2), "zero-section point must be rejected");
}
