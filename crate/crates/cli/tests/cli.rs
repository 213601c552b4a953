//! End-to-end checks of the `meshlight` binary: exit codes, file outputs,
//! and the simulate/yield flows.

use std::process::Command;

fn meshlight() -> Command {
    Command::new(env!("CARGO_BIN_EXE_meshlight"))
}

fn tiny_scenario(extra: &str) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "name": "tiny",
  "mesh": {{ "n_rows": 1, "n_cols": 2 }},
  "constants": {{ "n_eff": 2.35, "n_g": 2.35, "c": 3.0e8 }},
  "tbu": {{ "alpha": 0.99, "length_m": 2.5e-4 }},
  "inputs": [ {{ "row": 1, "re": 1.0, "im": 0.0 }} ],
  "grid": {{ "f_norm_min": -0.5, "f_norm_max": 0.5, "n_grid": 5 }},
  "cost": "linear_mag",
  "targets": [
    {{ "row": 2, "shape": {{ "kind": "magnitude_mask",
        "segments": [ {{ "from": -1.0, "to": 1.0, "level": 0.6, "weight": 1.0 }} ] }} }}
  ],
  "optimizer": {{
    "algorithm": "adam", "learning_rate": 0.02, "max_iters": 40,
    "rel_tol": 1e-9, "restarts": 1, "seed": 5
  }}{extra}
}}"#
    )
}

#[test]
fn run_produces_reports_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("tiny.json");
    std::fs::write(&scenario, tiny_scenario("")).unwrap();
    let out = dir.path().join("out");
    let status = meshlight()
        .args([
            "run",
            scenario.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    for name in [
        "spectrum.csv",
        "heatmap.csv",
        "meshstate.json",
        "portmap.csv",
        "coupling.csv",
        "cost_trace.csv",
        "report.json",
        "spectrum.svg",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }

    // Simulate the exported mesh state over a fresh grid.
    let sim_out = dir.path().join("sim");
    let status = meshlight()
        .args([
            "simulate",
            out.join("meshstate.json").to_str().unwrap(),
            "--grid",
            "-0.5:0.5:7",
            "--input",
            "1",
            "--out",
            sim_out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(sim_out.join("spectrum.csv").exists());
}

#[test]
fn progress_stream_emits_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("tiny.json");
    std::fs::write(&scenario, tiny_scenario("")).unwrap();
    let out = dir.path().join("out");
    let output = meshlight()
        .args([
            "run",
            scenario.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--progress",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let first = stdout.lines().next().expect("at least one progress line");
    let value: serde_json::Value = serde_json::from_str(first).unwrap();
    assert!(value.get("iteration").is_some());
    assert!(value.get("cost").is_some());
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Output on the wrong column.
    let bad = tiny_scenario("").replace(
        r#""targets": [
    { "row": 2, "shape": { "kind": "magnitude_mask","#,
        r#""targets": [
    { "row": 2, "col": 1, "shape": { "kind": "magnitude_mask","#,
    );
    let scenario = dir.path().join("bad.json");
    std::fs::write(&scenario, bad).unwrap();
    let output = meshlight()
        .args(["run", scenario.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("targets[0].col"), "stderr: {stderr}");

    // Bad grid argument on simulate.
    let output = meshlight()
        .args(["simulate", "/nonexistent.json", "--grid", "oops"])
        .output()
        .unwrap();
    assert_ne!(output.status.code(), Some(0));
}

#[test]
fn yield_without_variation_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("tiny.json");
    std::fs::write(&scenario, tiny_scenario("")).unwrap();
    let output = meshlight()
        .args(["yield", scenario.to_str().unwrap(), "--samples", "4"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn yield_runs_with_variation_model() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("tiny.json");
    let extra = r#",
  "nonideality": { "variation": { "sigma_eta1": 0.01, "sigma_eta2": 0.01, "sigma_alpha": 0.001, "sigma_length": 1e-8 } },
  "yield_pass": [ { "row": 2, "from": -1.0, "to": 1.0, "min_db": -60.0 } ]"#;
    std::fs::write(&scenario, tiny_scenario(extra)).unwrap();
    let out = dir.path().join("out");
    let status = meshlight()
        .args([
            "yield",
            scenario.to_str().unwrap(),
            "--samples",
            "8",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("yield.json").exists());
    assert!(out.join("envelope.csv").exists());
}
