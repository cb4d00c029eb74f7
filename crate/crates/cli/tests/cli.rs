use std::path::Path;
use std::process::{Command, Output};

fn twohop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twohop")).args(args).output().expect("spawn twohop")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SCALAR: &str = r#"{"m": 1, "field": "real", "h1": [[1.0, 0.6], [-0.8, 1.3]], "h2": [[1.1, 0.5], [0.4, -0.9]]}"#;

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn topology_scalar_nulls_g12() {
    let dir = tempfile::tempdir().unwrap();
    let ch = write(dir.path(), "ch.json", SCALAR);
    let v = json(&twohop(&["topology", "--channel", &ch, "--topology", "S"]));
    assert!(v["gains"]["g12"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["kernel"]["label"], "S");
}

#[test]
fn topology_mimo_reports_check() {
    let dir = tempfile::tempdir().unwrap();
    let ch = write(dir.path(), "ch.json", SCALAR);
    let v = json(&twohop(&["topology", "--channel", &ch, "--topology", "x", "--mimo"]));
    assert_eq!(v["passes"], true);
}

#[test]
fn verify_three_phase_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let ch = write(dir.path(), "ch.json", SCALAR);
    let mut kernels = Vec::new();
    for t in ["S", "Z", "X"] {
        kernels.push(json(&twohop(&["topology", "--channel", &ch, "--topology", t]))["kernel"].clone());
    }
    let ks = write(dir.path(), "k.json", &serde_json::to_string(&kernels).unwrap());
    let v = json(&twohop(&["verify", "--channel", &ch, "--kernels", &ks]));
    assert!(v["residuals"]["scalar_identity"].as_f64().unwrap() < 1e-9);
    assert!((v["bounds"]["min_bound"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn sweep_and_dof() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"ensemble": {"m": 1, "seed": 0, "distribution": "gaussian_entries"},
            "schemes": ["tdma", "three_phase"], "p_grid_db": [50, 60, 70, 80], "n_channels": 3, "seed": 1}"#,
    );
    let out = twohop(&["sweep", "--config", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("scheme,p_db,mean_sum_rate,std_sum_rate,n_channels,skips\n"));
    assert_eq!(text.lines().count(), 9);

    let v = json(&twohop(&["dof", "--config", &cfg, "--window", "50:80", "--normalizer", "half-log2"]));
    let tdma = v["tdma"]["slope"].as_f64().unwrap();
    assert!((tdma - 2.0).abs() < 1e-3, "{tdma}");
}

#[test]
fn simulate_small() {
    let dir = tempfile::tempdir().unwrap();
    let ch = write(dir.path(), "ch.json", SCALAR);
    let v = json(&twohop(&["simulate", "--channel", &ch, "--power-db", "20", "--symbols", "2000", "--seed", "3"]));
    assert_eq!(v["n_symbols"], 2000);
    assert_eq!(v["empirical_stream_vars"].as_array().unwrap().len(), 4);
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let ch = write(dir.path(), "ch.json", "{\"m\": 1}");
    let out = twohop(&["topology", "--channel", &ch, "--topology", "S"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
