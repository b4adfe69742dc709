use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn embedlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embedlab")).args(args).output().expect("spawn embedlab")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("error object on stderr")
}

const FREE_SPECTRUM: &str = r#"{
  "model": { "kind": "FourthOrderLine", "potential": { "form": "SechPair", "a": 0.0, "b": 0.0 } },
  "grid": { "x_min": -20.0, "x_max": 20.0, "n_points": 401 },
  "task": { "kind": "Spectrum" }
}"#;

#[test]
fn list_has_at_least_eight_scenarios() {
    let out = embedlab(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 8);
    assert!(text.contains("line_spectrum") && text.contains("free_delta_rank"));
}

#[test]
fn every_bundled_scenario_validates() {
    let out = embedlab(&["list"]);
    for name in String::from_utf8(out.stdout).unwrap().lines().filter_map(|l| l.split_whitespace().next()) {
        let v = embedlab(&["validate", name]);
        assert!(v.status.success(), "{name}: {}", String::from_utf8_lossy(&v.stderr));
    }
}

#[test]
fn line_spectrum_finds_eigenvalue_near_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = embedlab(&["run", "line_spectrum", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    let lambda0 = r["results"]["spectrum"]["lambda0"].as_f64().unwrap();
    assert!((0.999..=1.001).contains(&lambda0), "{lambda0}");
    assert_eq!(r["task"], "Spectrum");
    assert!(dir.path().join("eigenvectors.csv").exists());
}

#[test]
fn free_delta_rank_is_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = embedlab(&["run", "free_delta_rank", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["results"]["rank"]["rank"], 2);
    let csv = std::fs::read_to_string(dir.path().join("singular_values.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("index,singular_value"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn malformed_json_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    std::fs::write(&file, "{ \"model\": ").unwrap();
    let out_dir = dir.path().join("out");
    let out = embedlab(&["run", file.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["class"], "config");
    assert!(!out_dir.exists());
}

#[test]
fn unknown_tolerance_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.json");
    let text = FREE_SPECTRUM.replace("\"task\"", "\"tolerances\": { \"speed\": 1.0 },\n  \"task\"");
    std::fs::write(&file, text).unwrap();
    let out = embedlab(&["validate", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["error"]["message"].as_str().unwrap().contains("speed"));
}

#[test]
fn missing_basis_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.json");
    std::fs::write(&file, FREE_SPECTRUM.replace("\"Spectrum\"", "\"FermiJacobian\"")).unwrap();
    let out = embedlab(&["validate", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_scenario_name_suggests_alternatives() {
    let out = embedlab(&["run", "line_spectrun"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr_json(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("line_spectrum"), "{msg}");
}

#[test]
fn numerical_failure_exits_3_with_kind() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("free.json");
    std::fs::write(&file, FREE_SPECTRUM).unwrap();
    let out_dir = dir.path().join("out");
    let out = embedlab(&["run", file.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["class"], "numerical");
    assert_eq!(err["error"]["kind"], "EmbeddedNotFound");
    assert!(!out_dir.exists());
}

#[test]
fn bad_thread_cap_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_embedlab"))
        .args(["run", "free_delta_rank", "--out", tempfile::tempdir().unwrap().path().to_str().unwrap()])
        .env("EMBEDLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runs_are_deterministic_and_seed_is_recorded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = Command::new(env!("CARGO_BIN_EXE_embedlab"))
            .args(["run", "cylinder_construct", "--seed", "11", "--out", d.path().to_str().unwrap()])
            .env("EMBEDLAB_THREADS", if std::ptr::eq(d, &a) { "1" } else { "3" })
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["construct.csv", "construct_profile.csv", "report.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let r = report(a.path());
    assert_eq!(r["seed"], 11);
    assert_eq!(r["inputs"]["seed"], 11);
    let residual = r["results"]["summary"]["max_residual"].as_f64().unwrap();
    assert!(residual <= 1e-8, "{residual}");
}

#[test]
fn basis_file_resolves_relative_to_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let n = 2001;
    let grid: Vec<f64> = (0..n).map(|i| -40.0 + 80.0 * i as f64 / (n - 1) as f64).collect();
    let elements: Vec<Vec<f64>> = [-2.0, -0.7, 0.4, 1.3, 2.2, 3.0]
        .iter()
        .map(|c| grid.iter().map(|x| (-(x - c) * (x - c)).exp()).collect())
        .collect();
    let labels: Vec<String> = (0..6).map(|k| format!("g{k}")).collect();
    let basis = serde_json::json!({ "labels": labels, "elements": elements });
    std::fs::write(dir.path().join("basis.json"), basis.to_string()).unwrap();
    let scenario = r#"{
      "model": { "kind": "FourthOrderLine", "potential": { "form": "LatticeSech" } },
      "grid": { "x_min": -40.0, "x_max": 40.0, "n_points": 2001 },
      "basis": { "source": "File", "path": "basis.json" },
      "task": { "kind": "FermiJacobian" }
    }"#;
    let file = dir.path().join("jac.json");
    std::fs::write(&file, scenario).unwrap();
    let out_dir = dir.path().join("out");
    let out = embedlab(&["run", file.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out_dir);
    assert_eq!(r["name"], "jac");
    assert_eq!(r["results"]["jacobian"]["rank"], 2);
    assert!(r["results"]["jacobian"]["fd_relative_error"].as_f64().unwrap() <= 1e-3);
}
