use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wristkin"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn fk_reports_four_assemblies() {
    let out = run(&["fk", "--variant", "parallel-actuators", "--theta", "0.1", "0.2", "0.78"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["solutions"].as_array().unwrap().len(), 4);
    assert_eq!(v["spurious_count"], 2);
    // Inputs survive the JSON round trip bit for bit.
    assert_eq!(v["joints"]["theta3"].as_f64(), Some(0.78));
}

#[test]
fn ik_in_degrees() {
    let out = run(&[
        "ik",
        "--variant",
        "parallel-actuators",
        "--rpy",
        "45",
        "15",
        "15",
        "--degrees",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    let sols = v["solutions"].as_array().unwrap();
    assert_eq!(sols.len(), 4);
    assert!(sols.iter().all(|s| s["branch"]["elbow"].is_array()));
    let yaw = v["orientation"]["yaw"].as_f64().unwrap();
    assert!((yaw - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
}

#[test]
fn fk_output_verifies_through_ik() {
    let fk = run(&["fk", "--theta", "0.1", "0.2", "0.78"]);
    let mut child = bin()
        .args(["ik", "--verify"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(&fk.stdout).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["mismatches"], 0);
    assert_eq!(v["checked"], 4);
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.csv");
    let out = run(&[
        "sweep",
        "--variant",
        "parallel-actuators",
        "--box",
        "default",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "yaw_deg,pitch_deg,roll_deg,reachable,theta1,theta2,theta3,det_A_norm,det_B_norm,kappa_paper,kappa_exact,singularity_kind"
    );
    assert_eq!(lines.count(), 61 * 31 * 17);
    let summary = json(&out);
    assert_eq!(summary["summary"]["cells"], 61 * 31 * 17);
}

#[test]
fn thread_cap_does_not_change_output() {
    let a = run(&["sweep", "--box", "coarse", "--format", "csv"]);
    let b = bin()
        .args(["sweep", "--box", "coarse", "--format", "csv"])
        .env("WRISTKIN_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn domain_error_exit_code() {
    let out = run(&["ik", "--rpy", "0.785", "-1.0", "0.6"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["error"], "Unreachable");
    assert!(v["detail"].is_string());
}

#[test]
fn usage_error_exit_code() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["fk", "--theta", "0.1"]).status.code(), Some(1));
    assert_eq!(
        run(&["fk", "--variant", "nope", "--theta", "0", "0", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn scene_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scene.json");
    let out = run(&[
        "ik",
        "--rpy",
        "45",
        "5",
        "2",
        "--degrees",
        "--scene",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let scene: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let poses = scene["poses"].as_array().unwrap();
    assert_eq!(poses.len(), 4);
    for pose in poses {
        let labels: Vec<&str> = pose["points"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["label"].as_str().unwrap())
            .collect();
        for seg in pose["segments"].as_array().unwrap() {
            assert!(labels.contains(&seg["from"].as_str().unwrap()));
            assert!(labels.contains(&seg["to"].as_str().unwrap()));
        }
    }
}

#[test]
fn config_file_overrides_variant() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mech.json");
    let m = wristkin::mechanism_from_variant(wristkin::VariantTag::ParallelAxes);
    std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    let out = run(&["isotropy", "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(json(&out)["mode"], "full");
}

#[test]
fn jac_and_singularity() {
    let out = run(&["jac", "--rpy", "50", "5", "2", "--degrees", "--fd-step", "1e-5"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["jacobians"]["jinv_exact"].is_array());
    assert!(v["fd_jacobian"].is_array());

    let out = run(&["singularity", "--rpy", "45", "0", "0", "--degrees"]);
    assert_eq!(json(&out)["kind"], "non-singular");
}

#[test]
fn gait_presets() {
    let out = run(&["gait", "--preset", "zero", "--samples", "32"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["violation_count"], 0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let out = run(&[
        "gait",
        "--preset",
        "full-envelope",
        "--samples",
        "16",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("time,vertebra,yaw,pitch,roll,theta1,theta2,theta3,margin,kappa,viol_flags"));
    assert_eq!(text.lines().count(), 1 + 10 * 16);
}

#[test]
fn oracle_check_passes() {
    let out = run(&["oracle-check", "--count", "2", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(json(&out)["pass"], true);
}
