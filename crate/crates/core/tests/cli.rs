use std::fs;

use bifocus::cli::run;
use serde_json::Value;

fn run_in(dir: &std::path::Path, args: &[&str]) -> i32 {
    let out = dir.to_str().unwrap();
    let mut all = vec!["bifocus"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", out]);
    run(all)
}

fn json(path: &std::path::Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn non_bifocal_parameter_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["coeffs", "--eta3", "2.5"]), 2);
    assert!(!tmp.path().join("coefficients.json").exists());
}

#[test]
fn malformed_arguments_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["sweep", "--grid", "-1:-2:0.1"]), 2);
    assert_eq!(run_in(tmp.path(), &["tangency", "--bracket", "-1.78"]), 2);
    assert_eq!(run_in(tmp.path(), &["coeffs", "--eta3", "-1.73", "--M", "0"]), 2);
    assert_eq!(run_in(tmp.path(), &["frobnicate"]), 2);
}

#[test]
fn coefficient_file_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["coeffs", "--eta3", "-1.73", "--M", "30"]), 0);
    let c = json(&tmp.path().join("coefficients.json"));
    assert_eq!(c["M"], 30);
    assert_eq!(c["eta3"], -1.73);
    let a = c["a"].as_array().unwrap();
    let a10 = a.iter().find(|t| t[0] == 1 && t[1] == 0).unwrap();
    assert_eq!(a10[2].as_f64().unwrap(), -1.0);
    let m = json(&tmp.path().join("manifest.json"));
    for key in ["config", "tolerances", "version", "wall_clock_seconds", "files"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"eta3": -1.5, "M": 12}"#).unwrap();
    let out = tmp.path().join("out");
    let code = run(["bifocus", "coeffs", "--config", cfg.to_str().unwrap(), "--M", "14", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let c = json(&out.join("coefficients.json"));
    assert_eq!(c["eta3"], -1.5);
    assert_eq!(c["M"], 14);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"eta": -1.5}"#).unwrap();
    assert_eq!(run(["bifocus", "coeffs", "--config", cfg.to_str().unwrap()]), 2);
}

#[test]
fn empty_census_is_a_valid_result() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["homoclinics", "--eta3", "-1.95", "--kmax", "1"]), 0);
    let c = json(&tmp.path().join("census.json"));
    assert_eq!(c["orbits"].as_array().unwrap().len(), 0);
}

#[test]
fn single_order_two_orbit() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["homoclinics", "--eta3", "-0.60", "--kmax", "1"]), 0);
    let c = json(&tmp.path().join("census.json"));
    let orbits = c["orbits"].as_array().unwrap();
    assert_eq!(orbits.len(), 1);
    assert_eq!(orbits[0]["order"], 2);
    assert_eq!(orbits[0]["symmetric"], true);
    let csv = fs::read_to_string(tmp.path().join("orbit_00.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,x3,x4,H\n"));
    assert!(!csv.contains('\r') && !csv.contains('"'));
}

#[test]
fn traces_have_ten_curves_and_fixed_width_numbers() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), &["traces", "--eta3", "-1.73", "--kmax", "5"]), 0);
    let t = json(&tmp.path().join("traces.json"));
    assert_eq!(t["curves"].as_array().unwrap().len(), 10);
    let csv = fs::read_to_string(tmp.path().join("traces.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "eta3,branch,k,theta,x1,x3,x4,xbar1,region,tangential");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mantissa = row[3].split('e').next().unwrap().trim_start_matches('-').replace('.', "");
    assert_eq!(mantissa.len(), 17);
}

#[test]
fn sweep_is_independent_of_the_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let grid = ["sweep", "--grid", "-1.62:-1.58:0.01", "--kmax", "3"];
    let mut args: Vec<&str> = vec!["bifocus"];
    args.extend_from_slice(&grid);
    let code_a = run(args.iter().copied().chain(["--workers", "1", "--out", a.to_str().unwrap()]));
    let code_b = run(args.iter().copied().chain(["--workers", "4", "--out", b.to_str().unwrap()]));
    assert_eq!((code_a, code_b), (0, 0));
    assert_eq!(fs::read(a.join("sweep.json")).unwrap(), fs::read(b.join("sweep.json")).unwrap());
    let s = json(&a.join("sweep.json"));
    assert_eq!(s["grid"].as_array().unwrap().len(), 5);
}
