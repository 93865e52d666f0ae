use serde_json::Value;
use std::path::Path;
use std::process::Command;

fn mcflab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mcflab")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const SMALL_MBO: &str = r#"{
  "scene": { "type": "circle", "radius": 0.5, "nodes": 64 },
  "grid": { "nx": 48 },
  "flow": { "solver": "mbo", "dt": 0.01, "t_end": 0.05, "snapshot_stride": 2 }
}"#;

#[test]
fn validate_accepts_minimal_config() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.json", r#"{"scene": {"type": "circle"}}"#);
    assert_eq!(mcflab(&["validate", "--config", &c]).0, 0);
}

#[test]
fn violations_exit_with_input_error_and_error_json() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.json", r#"{"scene": {"type": "circle"}, "flow": {"dt": -1, "t_end": 0}, "extra": 1}"#);
    let out = d.path().join("out");
    let (code, err) = mcflab(&["evolve", "--config", &c, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    for key in ["flow.dt", "flow.t_end", "extra"] {
        assert!(err.contains(key), "{key} not reported in {err}");
    }
    let e = read_json(&out.join("error.json"));
    assert_eq!(e["error"], "input");
    assert_eq!(e["messages"].as_array().unwrap().len(), 3);
}

#[test]
fn inadmissible_tensions_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    let c = write(
        d.path(),
        "c.json",
        r#"{"scene": {"type": "triod"}, "sigma": [[0, 1, 3], [1, 0, 1], [3, 1, 0]]}"#,
    );
    let (code, err) = mcflab(&["validate", "--config", &c]);
    assert_eq!(code, 2);
    assert!(err.contains("sigma"), "{err}");
}

#[test]
fn noise_without_seed_is_an_input_error() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.json", r#"{"scene": {"type": "circle"}, "perturbation": {"type": "noise", "p": 0.1}}"#);
    assert_eq!(mcflab(&["validate", "--config", &c]).0, 2);
    assert_eq!(mcflab(&["validate", "--config", &c, "--seed", "3"]).0, 0);
}

#[test]
fn kind_must_match_subcommand() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.json", r#"{"kind": "grain-growth", "scene": {"type": "circle"}}"#);
    assert_eq!(mcflab(&["evolve", "--config", &c]).0, 2);
}

#[test]
fn reruns_are_byte_identical_and_manifest_hashes_match() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.json", SMALL_MBO);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    assert_eq!(mcflab(&["evolve", "--config", &c, "--out", a.to_str().unwrap(), "--jobs", "2"]).0, 0);
    assert_eq!(mcflab(&["evolve", "--config", &c, "--out", b.to_str().unwrap()]).0, 0);
    let m = read_json(&a.join("manifest.json"));
    let files = m["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["file"] == "energy.csv"));
    for f in files {
        let name = f["file"].as_str().unwrap();
        let bytes = std::fs::read(a.join(name)).unwrap();
        assert_eq!(bytes.len() as u64, f["bytes"].as_u64().unwrap());
        if name.ends_with(".csv") {
            assert_eq!(bytes, std::fs::read(b.join(name)).unwrap(), "{name} differs between runs");
        }
    }
}

#[test]
fn static_triod_calibration_check_passes() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.json", r#"{"scene": {"type": "triod", "half": 1.0, "spacing": 0.04}}"#);
    let out = d.path().join("out");
    assert_eq!(mcflab(&["calibrate-check", "--config", &c, "--out", out.to_str().unwrap()]).0, 0);
    let s = read_json(&out.join("summary.json"));
    assert_eq!(s["status"], "pass");
    assert!(s["result"]["check"]["residuals"]["herring_max"].as_f64().unwrap() < 1e-12);
}

#[test]
fn front_tracking_needs_a_network_scene() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.json", r#"{"scene": {"type": "fourgrains-demo"}, "flow": {"solver": "strong"}}"#);
    let out = d.path().join("out");
    assert_eq!(mcflab(&["evolve", "--config", &c, "--out", out.to_str().unwrap()]).0, 2);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn export_fields_writes_lattice() {
    let d = tempfile::tempdir().unwrap();
    let c = write(d.path(), "c.json", r#"{"scene": {"type": "circle", "nodes": 64}, "grid": {"nx": 32}, "calibration": {"samples": 11}}"#);
    let out = d.path().join("out");
    assert_eq!(mcflab(&["export-fields", "--config", &c, "--out", out.to_str().unwrap()]).0, 0);
    let csv = std::fs::read_to_string(out.join("fields.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 11 * 11);
    assert!(csv.starts_with("x,y,eta_sum,bx,by,xi0_x,xi0_y,xi1_x,xi1_y"));
}
