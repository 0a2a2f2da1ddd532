//! End-to-end CLI checks: exit codes, artifact round-trips, and
//! byte-identical determinism for a fixed seed.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use causalcone::curve::read_curve_file;
use causalcone::geom::ChartDomain;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_causalcone"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn tau_on_flat_chart_exits_zero_with_expected_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["tau", "-s", "minkowski2d", "--p", "0,0", "--q", "2,1"])
        .args(["--segments", "16", "--restarts", "2", "--perturbations", "50"])
        .args(["-o", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let tau: f64 = std::fs::read_to_string(tmp.path().join("run_tau.txt")).unwrap().trim().parse().unwrap();
    assert!((tau - 3.0f64.sqrt()).abs() < 0.02, "tau = {tau}");
    assert!(tmp.path().join("run_tau_certificate.json").exists());
}

#[test]
fn diagnose_on_closed_cylinder_exits_two_with_witness_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["diagnose", "-s", "ctc_cylinder", "--pair-samples", "4", "--cells-per-unit", "32"])
        .args(["-o", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    // The witness re-parses as a curve on the same chart.
    let domain = Arc::new(
        ChartDomain::new_box(vec![(0.0, 1.0), (-1.0, 1.0)])
            .unwrap()
            .with_periodic(vec![true, false]),
    );
    let witness = read_curve_file(domain, &tmp.path().join("run_causal_witness.curve")).unwrap();
    assert!(witness.vertices.len() >= 2);
}

#[test]
fn diamond_on_slit_chart_exits_two_with_defect_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["diamond", "-s", "slit_minkowski", "--p", "0,0", "--q", "2,0"])
        .args(["--cells-per-unit", "16", "-o", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run_diamond.json")).unwrap()).unwrap();
    assert!(!report["closure_defect_cells"].as_array().unwrap().is_empty());
}

#[test]
fn identical_seed_gives_byte_identical_artifacts() {
    let run = |dir: &Path, seed: &str| {
        let out = bin()
            .args(["tau", "-s", "bubble_metric", "--p=-0.8,0.2", "--q", "0.8,-0.1"])
            .args(["--segments", "8", "--restarts", "3", "--perturbations", "60", "--seed", seed])
            .args(["-o", dir.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(a.path(), "11");
    run(b.path(), "11");
    assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(b.path()), "same seed must reproduce bytes");
}

#[test]
fn scenario_file_runs_through_the_run_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let config = format!(
        r#"
        [spacetime]
        id = "minkowski2d"

        [operation]
        id = "reach"
        p = [0.0, 0.0]
        mode = "over"
        direction = "future"

        [grid]
        cells_per_unit = 16.0

        [output]
        dir = "{}"
        prefix = "cone"
        "#,
        tmp.path().display()
    );
    let path = tmp.path().join("scenario.toml");
    std::fs::write(&path, config).unwrap();
    let out = bin().args(["run", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("cone_reach.txt").exists());
    assert!(tmp.path().join("cone_reach_boundary.csv").exists());
}

#[test]
fn malformed_config_and_unknown_id_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "[operation\nid = ").unwrap();
    let out = bin().args(["run", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let tmp2 = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["reach", "-s", "nonexistent", "--p", "0,0", "-o", tmp2.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn widen_subcommand_reports_shell_order() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["widen", "-s", "minkowski2d", "--shells", "4"])
        .args(["--delta-ladder", "0.4,0.2,0.1,0.05"])
        .args(["-o", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run_widen.json")).unwrap()).unwrap();
    assert_eq!(report["strictly_wider"], serde_json::Value::Bool(true));
}

#[test]
fn develop_subcommand_writes_development() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["develop", "-s", "minkowski2d", "--surface", "0,-1..0,1", "--side", "future"])
        .args(["--cells-per-unit", "16", "-o", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("run_development.txt").exists());
}
