//! The `calibra` binary: exit codes, plan display and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

fn calibra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calibra")).args(args).output().expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

const STRAIGHT: &str = r#"
name = "straight"

[chart]
kind = "torus"
dim = 2
resolution = 32

[[submanifold]]
name = "C"
coords = ["t", "0.3"]
dim = 1
resolution = 64

[construction]
kind = "conformal"
epsilon = 0.0625

[verify]
competitors = 5
"#;

#[test]
fn passing_run_exits_zero_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = calibra(&["run", scenario("t2_straight_flat").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("PASS t2_straight_flat"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["timestamp"].is_null());
}

#[test]
fn failing_verification_exits_one_and_names_the_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let o = calibra(&["run", scenario("t2_sheared_fibers").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stdout).contains("fperp-comass-on-manifold-max"), "{}", text(&o.stdout));
}

#[test]
fn malformed_and_missing_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, STRAIGHT.replace("epsilon = 0.0625", "epsilon = 0.0625\nepsilonn = 1")).unwrap();
    for cmd in ["run", "describe"] {
        let o = calibra(&[cmd, bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()][..if cmd == "run" { 4 } else { 2 }]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        let err = text(&o.stderr);
        assert!(err.contains("epsilonn") && err.contains("line"), "{err}");
        let o = calibra(&[cmd, "/nonexistent/scenario.toml"]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
    }
    let invalid = dir.path().join("invalid.toml");
    std::fs::write(&invalid, STRAIGHT.replace("epsilon = 0.0625", "epsilon = -1.0")).unwrap();
    assert_eq!(calibra(&["run", invalid.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(calibra(&["run"]).status.code(), Some(2));
}

#[test]
fn describe_is_deterministic_and_echoes_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("straight.toml");
    std::fs::write(&path, STRAIGHT).unwrap();
    let a = calibra(&["describe", path.to_str().unwrap()]);
    let b = calibra(&["describe", path.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let plan = text(&a.stdout);
    assert!(plan.contains("epsilon=0.0625"), "{plan}");
    // profile radii from epsilon
    assert!(plan.contains("profile rho: 1 on [0, 0.0375], 0 beyond 0.05"), "{plan}");
    assert!(!dir.path().join("straight").exists());
    for name in ["t2_wiggly_conformal", "t3_several_calibrations", "box_circle_mc"] {
        let o = calibra(&["describe", scenario(name).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        assert!(text(&o.stdout).contains(name));
    }
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("straight.toml");
    std::fs::write(&path, STRAIGHT.replace("coords = [\"t\", \"0.3\"]", "coords = [\"t\", \"0.5 + 0.1*sin(2*pi*t)\"]")).unwrap();
    let mut reports = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        let o = calibra(&["run", path.to_str().unwrap(), "--jobs", jobs, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}{}", text(&o.stdout), text(&o.stderr));
        reports.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn seed_and_output_directory_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("straight.toml");
    std::fs::write(&path, STRAIGHT).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_calibra"))
        .args(["run", path.to_str().unwrap(), "--seed", "11", "--tol-scale", "2"])
        .env("CALIBRA_OUT", dir.path().join("outputs"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("outputs/straight/report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 11);
    assert_eq!(report["tol_scale"], 2.0);
    assert_eq!(report["tolerances"]["comass"], 2e-6);
}
