//! End-to-end runs of the `horizon-pmp` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DVector;

use horizon_pmp::lab::catalog;
use horizon_pmp::lab::format::trajectory_to_text;
use horizon_pmp::model::Trajectory;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_horizon-pmp"));
    c.env_remove("HORIZON_PMP_TOL");
    c
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn emit(dir: &Path, name: &str, horizon: usize) -> (PathBuf, PathBuf) {
    let prob = dir.join(format!("{name}.problem"));
    let traj = dir.join(format!("{name}.traj"));
    let (code, _, err) = run(bin()
        .args(["catalog", "emit", name, "--horizon", &horizon.to_string(), "--out"])
        .arg(&prob)
        .arg("--trajectory-out")
        .arg(&traj));
    assert_eq!(code, 0, "{err}");
    (prob, traj)
}

#[test]
fn catalog_list_names_every_problem() {
    let (code, out, _) = run(bin().args(["catalog", "list"]));
    assert_eq!(code, 0);
    for name in catalog::names() {
        assert!(out.contains(name), "{out}");
    }
}

#[test]
fn certify_every_catalog_problem() {
    let dir = tempfile::tempdir().unwrap();
    for name in catalog::names() {
        let (prob, traj) = emit(dir.path(), name, 120);
        let report = dir.path().join(format!("{name}.report"));
        let (code, out, err) = run(bin()
            .arg("certify")
            .arg("--problem")
            .arg(&prob)
            .arg("--trajectory")
            .arg(&traj)
            .arg("--report")
            .arg(&report));
        assert_eq!(code, 0, "{name}: {out}{err}");
        assert!(out.contains("PASS"), "{out}");
        let text = std::fs::read_to_string(&report).unwrap();
        assert!(text.contains("certificate v1"), "{text}");
    }
}

#[test]
fn perturbed_candidate_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let (prob, _) = emit(dir.path(), "LQ1", 60);
    let inst = catalog::lq1(60).unwrap();
    let mut controls = inst.candidate.controls.clone();
    controls[0] += DVector::from_element(1, 0.1);
    let moved = Trajectory::simulate(&inst.problem, controls).unwrap();
    let traj = dir.path().join("moved.traj");
    std::fs::write(&traj, trajectory_to_text(&moved)).unwrap();
    let (code, out, err) = run(bin().arg("certify").arg("--problem").arg(&prob).arg("--trajectory").arg(&traj));
    assert_eq!(code, 1, "{out}{err}");
    assert!(!out.contains("PASS"), "{out}");

    // Same controls, states left on the old path: inadmissible.
    let mut broken = inst.candidate.clone();
    broken.controls[0] += DVector::from_element(1, 0.1);
    std::fs::write(&traj, trajectory_to_text(&broken)).unwrap();
    let (code, out, _) = run(bin().arg("check").arg("--problem").arg(&prob).arg("--trajectory").arg(&traj));
    assert_eq!(code, 1);
    assert!(out.contains("feasible no"), "{out}");
}

#[test]
fn check_and_qualify() {
    let dir = tempfile::tempdir().unwrap();
    let (prob, traj) = emit(dir.path(), "MIX1", 30);
    let (code, out, _) = run(bin().arg("check").arg("--problem").arg(&prob).arg("--trajectory").arg(&traj));
    assert_eq!(code, 0);
    assert!(out.contains("feasible yes"), "{out}");
    let (code, out, _) = run(bin()
        .arg("qualify")
        .arg("--problem")
        .arg(&prob)
        .arg("--trajectory")
        .arg(&traj)
        .args(["--t", "3"]));
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("active rows [0]") && out.contains("disjoint"), "{out}");
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (prob, traj) = emit(dir.path(), "CON1", 60);
    let (code, out, err) = run(bin()
        .arg("sweep")
        .arg("--problem")
        .arg(&prob)
        .arg("--trajectory")
        .arg(&traj)
        .args(["--h", "5..25:5"]));
    assert_eq!(code, 0, "{err}");
    let mut parts = out.split("\n\n");
    let table = parts.next().unwrap();
    assert_eq!(table.lines().count(), 1 + 5);
    assert!(parts.next().unwrap().starts_with("quantity,convergent,d5_10"));
    assert!(err.contains("5 of 5 runs certified"), "{err}");
}

#[test]
fn usage_and_environment_errors() {
    let (code, _, _) = run(bin().arg("frobnicate"));
    assert_eq!(code, 2);
    let dir = tempfile::tempdir().unwrap();
    let (prob, traj) = emit(dir.path(), "LQ1", 30);
    let (code, _, err) = run(bin()
        .env("HORIZON_PMP_TOL", "not-a-number")
        .arg("check")
        .arg("--problem")
        .arg(&prob)
        .arg("--trajectory")
        .arg(&traj));
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = run(bin()
        .arg("check")
        .arg("--problem")
        .arg(dir.path().join("missing.problem"))
        .arg("--trajectory")
        .arg(&traj));
    assert_eq!(code, 2);
    std::fs::write(&prob, "problem v1\nn two\n").unwrap();
    let (code, _, err) = run(bin().arg("check").arg("--problem").arg(&prob).arg("--trajectory").arg(&traj));
    assert_eq!(code, 2);
    assert!(err.contains("line 2"), "{err}");
}
