use std::fs;
use std::path::Path;
use std::process::Command;

fn micromag(dir: &Path, conf: &str, args: &[&str]) -> std::process::Output {
    fs::write(dir.join("run.conf"), conf).unwrap();
    Command::new(env!("CARGO_BIN_EXE_micromag"))
        .current_dir(dir)
        .args(args)
        .args(["--config", "run.conf"])
        .env_remove("MICROMAG_THREADS")
        .output()
        .unwrap()
}

const SPHEROID: &str = "[geometry]\nshape = ellipsoid:2,1,1\nresolution = 8, 4, 4\n[model]\neta = 0.1\n[run]\noutput = out\n";

#[test]
fn demag_tensor_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = micromag(dir.path(), SPHEROID, &["demag-tensor"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/demag_tensor.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("row,d0,d1,d2,eigenvalue,vx,vy,vz"));
    assert_eq!(lines.count(), 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/demag-tensor.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["results"]["shape_condition"], "satisfied");
    assert!(manifest["timings_seconds"]["total"].as_f64().is_some());
}

#[test]
fn config_errors_exit_with_two_and_list_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = micromag(dir.path(), "[geometry]\nshape = ellipsoid:2,1,1\nresolution = 8\n[model]\neta = -1\neta = 2\nbogus = 1\n", &["minimize"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("lines 5 and 6") && err.contains("line 7"), "{err}");
}

#[test]
fn sphere_periodic_run_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let conf = SPHEROID.replace("ellipsoid:2,1,1", "sphere").replace("8, 4, 4", "6");
    let out = micromag(dir.path(), &conf, &["periodic"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("shape condition violated"));
}

#[test]
fn corrupted_snapshot_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.mag"), b"MAGF\x01garbage").unwrap();
    let conf = format!("{SPHEROID}initial = file:bad.mag\n");
    let out = micromag(dir.path(), &conf, &["energy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("snapshot"));
}

#[test]
fn minimize_then_energy_from_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = micromag(dir.path(), SPHEROID, &["minimize"]);
    assert_eq!(out.status.code(), Some(0));
    let conf = format!("{SPHEROID}initial = file:out/minimizer.mag\n");
    let out = micromag(dir.path(), &conf, &["energy", "--output", "second"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("second/energy.csv")).unwrap();
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(row[4] <= 1e-8, "EL residual {}", row[4]);
}

#[test]
fn check_on_sphere_reports_expected_failure() {
    let dir = tempfile::tempdir().unwrap();
    let conf = SPHEROID.replace("ellipsoid:2,1,1", "sphere").replace("8, 4, 4", "6") + "samples = 2\n";
    let out = micromag(dir.path(), &conf, &["check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/checks.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("shape_condition,expected-fail,")), "{csv}");
}

#[test]
fn threads_come_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.conf"), SPHEROID).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_micromag"))
        .current_dir(dir.path())
        .args(["demag-tensor", "--config", "run.conf"])
        .env("MICROMAG_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/demag-tensor.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["threads"], 2);
    let bad = Command::new(env!("CARGO_BIN_EXE_micromag"))
        .current_dir(dir.path())
        .args(["demag-tensor", "--config", "run.conf"])
        .env("MICROMAG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
