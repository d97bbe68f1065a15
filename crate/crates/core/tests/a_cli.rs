//! Runs ahead of the acceptance target (cargo orders targets by name) so
//! that its results are reported even when acceptance fails.

use std::fs;
use std::process::Command;

fn sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sim"))
}

fn small_scenario(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{
  "topology": { "half_radix": 2, "stages": 2 },
  "cc": { "mechanism": "dcqcn_rev" },
  "flows": [
    { "id": 0, "src": 0, "dst": 3, "start_ns": 0, "stop_ns": 100000 },
    { "id": 1, "src": 1, "dst": 3, "start_ns": 0, "stop_ns": 100000 }
  ]
}"#,
    )
    .unwrap();
    path
}

#[test]
fn run_writes_three_files_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    let out = dir.path().join("out");
    let st = sim()
        .args(["run", "--scenario"])
        .arg(&scen)
        .args(["--cc", "pfc", "--seed", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    for f in ["deliveries.csv", "summary.csv", "run.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["cc"], "pfc_only");
    assert_eq!(run["seed"], 3);
}

#[test]
fn bound_before_drain_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    let out = dir.path().join("out");
    let st = sim()
        .args(["run", "--scenario"])
        .arg(&scen)
        .args(["--until-ms", "0.01", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(4));
    let run = fs::read_to_string(out.join("run.json")).unwrap();
    assert!(run.contains("\"truncated\": true"));
}

#[test]
fn invalid_scenario_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{ "flows": [ { "id": 0, "src": 0, "dst": 64, "start_ns": 0, "stop_ns": 10 } ] }"#,
    )
    .unwrap();
    let out = sim()
        .args(["validate", "--scenario"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("64"));
}

#[test]
fn validate_prints_reloadable_preset() {
    let out = sim()
        .args(["validate", "--scenario", "paper64"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = dcqcn_sim::ScenarioConfig::from_json_str(&text, "stdout").unwrap();
    assert_eq!(cfg, dcqcn_sim::ScenarioConfig::paper64());
}

#[test]
fn sweep_with_one_bad_override_keeps_going() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    let root = dir.path().join("sweep");
    let out = sim()
        .args(["sweep", "--scenario"])
        .arg(&scen)
        .arg("--out")
        .arg(&root)
        .args([
            "--override",
            r#"pfc={"cc":{"mechanism":"pfc_only"}}"#,
            "--override",
            r#"broken={"pfc":{"xon_bytes":999999999}}"#,
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(root.join("pfc/run.json").is_file());
    assert!(!root.join("broken").exists());
}
