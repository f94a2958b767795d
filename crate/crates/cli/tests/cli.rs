use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

fn amech(cmd: &str, config: &str, out: &Path) -> (i32, String) {
    let cfg = out.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_amech")).args([cmd, "--config"]).arg(&cfg).arg("--out").arg(out.join("out")).output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn validate_so3() {
    let d = TempDir::new().unwrap();
    let (code, err) = amech("validate", r#"{"algebroid": "so3", "run": {"t1": 1.0, "h": 0.01}}"#, d.path());
    assert_eq!(code, 0, "{err}");
    let v = read_json(d.path().join("out/validate.json"));
    assert_eq!(v["almost_lie"]["pass"], true);
    assert_eq!(v["lie"]["pass"], true);
    let m = read_json(d.path().join("out/manifest.json"));
    assert_eq!(m["command"], "validate");
    assert!(m["residual_summary"]["max_el_residual"].as_f64().unwrap() < 1e-6);
    assert!(m["residual_summary"]["energy_drift"].is_number());
}

#[test]
fn validate_reports_non_lie() {
    let d = TempDir::new().unwrap();
    let (code, _) = amech("validate", r#"{"algebroid": "skew-nonlie3", "run": {"t1": 1.0, "h": 0.01}}"#, d.path());
    assert_eq!(code, 0);
    let v = read_json(d.path().join("out/validate.json"));
    assert_eq!(v["almost_lie"]["pass"], true);
    assert_eq!(v["lie"]["pass"], false);
}

#[test]
fn conjugate_on_the_sphere() {
    let d = TempDir::new().unwrap();
    let (code, err) = amech("conjugate", r#"{"algebroid": "sphere2-tangent", "run": {"t1": 3.5, "h": 1e-3}}"#, d.path());
    assert_eq!(code, 0, "{err}");
    let v = read_json(d.path().join("out/conjugate.json"));
    let times = v["conjugate_times"].as_array().unwrap();
    assert_eq!(times.len(), 1);
    assert!((times[0]["t"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-3);
    assert_eq!(times[0]["multiplicity"], 1);
    assert_eq!(v["det_trace"].as_array().unwrap().len(), 3501);
}

#[test]
fn secondvar_on_a_flat_line() {
    let d = TempDir::new().unwrap();
    let (code, err) = amech("secondvar", r#"{"algebroid": "tangent(1)", "run": {"t1": 1.0, "h": 0.05}}"#, d.path());
    assert_eq!(code, 0, "{err}");
    let meta = read_json(d.path().join("out/secondvar_meta.json"));
    assert_eq!(meta["null_dimension"], 0);
    assert_eq!(meta["basis"], "hat");
    assert_eq!(meta["M"], 20);
    let csv = std::fs::read_to_string(d.path().join("out/secondvar_matrix.csv")).unwrap();
    assert_eq!(csv.lines().count(), 19);
    assert!(csv.lines().all(|r| r.split(',').count() == 19));
    let m = read_json(d.path().join("out/manifest.json"));
    assert!(m["residual_summary"]["symmetry_defect"].as_f64().unwrap() < 1e-12);
}

#[test]
fn integrate_and_jacobi_write_csv() {
    let d = TempDir::new().unwrap();
    let cfg = r#"{"algebroid": "sphere2-tangent", "run": {"t1": 1.0, "h": 0.01}, "task": {"xi0": [0, 0], "xidot0": [1, 0]}}"#;
    let (code, err) = amech("jacobi", cfg, d.path());
    assert_eq!(code, 0, "{err}");
    let traj = std::fs::read_to_string(d.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "t,x1,x2,y1,y2,energy");
    assert_eq!(traj.lines().count(), 102);
    let jac = std::fs::read_to_string(d.path().join("out/jacobi.csv")).unwrap();
    let last: Vec<f64> = jac.lines().last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert!((last[1] - 1f64.sin()).abs() < 1e-8);
}

#[test]
fn crosscheck_writes_report() {
    let d = TempDir::new().unwrap();
    let cfg = r#"{"algebroid": "so3", "run": {"t1": 1.0, "h": 1e-3}, "task": {"xi0": [0.1, 0.2, 0.3], "xidot0": [0.5, -0.4, 0.2], "ds": 1e-4}}"#;
    let (code, err) = amech("crosscheck", cfg, d.path());
    assert_eq!(code, 0, "{err}");
    let v = read_json(d.path().join("out/crosscheck.json"));
    assert!(v["el_lifted_residual"].as_f64().unwrap() < 1e-5);
    assert!(v["oracle_gap"].as_f64().unwrap() < 1e-4);
}

#[test]
fn wrong_rho_shape_is_a_config_error() {
    let d = TempDir::new().unwrap();
    let cfg = r#"{"algebroid": {"n": 2, "k": 1, "rho": [["1"]], "c": [[["0"]]]}, "lagrangian": "0.5*y1^2", "run": {"t1": 1, "h": 0.1, "y0": [1]}}"#;
    let (code, err) = amech("integrate", cfg, d.path());
    assert_eq!(code, 2);
    assert!(err.contains("algebroid.rho"), "{err}");
    assert!(!d.path().join("out").exists());
}

#[test]
fn lift_of_so3_has_rank_six() {
    let d = TempDir::new().unwrap();
    let (code, err) = amech("validate", r#"{"algebroid": "lift(so3)", "run": {"t1": 0.5, "h": 0.01}}"#, d.path());
    assert_eq!(code, 0, "{err}");
    let v = read_json(d.path().join("out/validate.json"));
    assert_eq!(v["k"], 6);
    assert_eq!(v["lie"]["pass"], true);
}

#[test]
fn degenerate_lagrangian_is_a_numerical_failure() {
    let d = TempDir::new().unwrap();
    let (code, err) = amech("integrate", r#"{"algebroid": "so3", "lagrangian": "0", "run": {"t1": 1, "h": 0.1}}"#, d.path());
    assert_eq!(code, 1);
    assert!(err.contains("singular"), "{err}");
}

#[test]
fn inline_config_with_mechanical_lagrangian() {
    let d = TempDir::new().unwrap();
    let cfg = r#"{"algebroid": {"n": 1, "k": 1, "rho": [["1"]], "c": [[["0"]]]},
                  "lagrangian": {"mechanical": {"metric": [["1"]], "potential": "0.5*x1^2"}},
                  "run": {"t1": 3.0, "h": 0.01, "x0": [1], "y0": [0]}}"#;
    let (code, err) = amech("integrate", cfg, d.path());
    assert_eq!(code, 0, "{err}");
    let traj = std::fs::read_to_string(d.path().join("out/trajectory.csv")).unwrap();
    let last: Vec<f64> = traj.lines().last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert!((last[1] - 3f64.cos()).abs() < 1e-8);
}

#[test]
fn artifacts_are_deterministic() {
    let d = TempDir::new().unwrap();
    let cfg = r#"{"algebroid": "so3", "run": {"t1": 1.0, "h": 0.02}}"#;
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        assert_eq!(amech("secondvar", cfg, d.path()).0, 0);
        let files = ["trajectory.csv", "secondvar_matrix.csv", "secondvar_meta.json", "manifest.json"];
        snapshots.push(files.map(|f| std::fs::read(d.path().join("out").join(f)).unwrap()));
    }
    assert!(snapshots[0] == snapshots[1]);
    let leftovers: Vec<_> = std::fs::read_dir(d.path().join("out")).unwrap().filter_map(|e| e.ok()).filter(|e| e.file_name().to_string_lossy().ends_with(".tmp")).collect();
    assert!(leftovers.is_empty());
}
