use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn longcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longcode"))
        .args(args)
        .env_remove("LONGCODE_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const TRIANGLE: &str = r#"{
  "variables": ["x", "y", "z"],
  "equations": [
    {"label": "xy", "context": ["x", "y"], "parity": 1},
    {"label": "yz", "context": ["y", "z"], "parity": 1},
    {"label": "xz", "context": ["x", "z"], "parity": -1}
  ]
}"#;

#[test]
fn fixture_prints_reference_values() {
    let v = json(&longcode(&["fixture", "magic_square"]));
    assert_eq!(v["name"], "magic_square");
    assert_eq!(v["classical_value"], "17/18");
    assert_eq!(v["quantum_value"], 1.0);
    assert_eq!(v["strategy"]["dim"], 4);
}

#[test]
fn classical_estimate_of_chsh() {
    let v = json(&longcode(&["estimate", "--fixture", "chsh", "--method", "classical"]));
    assert_eq!(v["point"], 0.75);
    assert_eq!(v["radius"], 0.0);
    assert_eq!(v["method"], "exact");
}

#[test]
fn seesaw_estimate_returns_a_strategy() {
    let v = json(&longcode(&["estimate", "--fixture", "chsh", "--method", "seesaw", "--dim", "2", "--iterations", "50"]));
    assert!(v["estimate"]["point"].as_f64().unwrap() > 0.8);
    assert_eq!(v["strategy"]["dim"], 2);
}

#[test]
fn build_then_estimate_a_constraint_system() {
    let dir = tempfile::tempdir().unwrap();
    let lcs = write(dir.path(), "triangle.json", TRIANGLE);
    let game = dir.path().join("game.json");
    let out = longcode(&["--out", game.to_str().unwrap(), "build", "--lcs", &lcs]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&longcode(&["estimate", game.to_str().unwrap(), "--method", "classical"]));
    let p = v["point"].as_f64().unwrap();
    assert!(p < 1.0 && p > 0.5, "{p}");
}

#[test]
fn compile_reports_threshold_and_completeness() {
    let v = json(&longcode(&["compile", "--fixture", "toy_parity", "--epsilon", "1/10", "--exact"]));
    assert_eq!(v["threshold_label"], "71/72");
    assert_eq!(v["payload_bytes"], 164);
    assert!((v["completeness"]["exact"]["point"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    let paper = longcode(&["compile", "--fixture", "toy_parity", "--epsilon", "1/10", "--paper"]);
    assert_eq!(paper.status.code(), Some(2));
    let half = longcode(&["compile", "--fixture", "toy_parity", "--epsilon", "1/2"]);
    assert_eq!(half.status.code(), Some(2));
}

#[test]
fn compiled_tests_can_be_sampled() {
    let dir = tempfile::tempdir().unwrap();
    let compiled = dir.path().join("test.json");
    let out = longcode(&["--out", compiled.to_str().unwrap(), "compile", "--fixture", "magic_square", "--h", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&longcode(&[
        "estimate",
        "--test",
        compiled.to_str().unwrap(),
        "--method",
        "montecarlo",
        "--samples",
        "2000",
    ]));
    let (p, r) = (v["point"].as_f64().unwrap(), v["radius"].as_f64().unwrap());
    assert!((p - 0.25).abs() <= r.max(0.03), "{p} ± {r}");
}

#[test]
fn same_seed_same_bytes() {
    let a = longcode(&["--seed", "9", "audit", "--dim", "2"]);
    let b = longcode(&["--seed", "9", "audit", "--dim", "2"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.toml", "seed = 1\n[[suite]]\nkind = \"classical\"\n");
    let v = json(&longcode(&["verify", &good]));
    assert_eq!(v["passed"], true);

    let noisy = write(dir.path(), "noisy.toml", "[[suite]]\nkind = \"soundness\"\nepsilon = \"2/5\"\n");
    let out = longcode(&["verify", &noisy]);
    assert_eq!(out.status.code(), Some(1));

    let bad = write(dir.path(), "bad.toml", "[[suite]]\nkind = \"fourier\"\ntrails = 3\n");
    let out = longcode(&["verify", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trails"));
}

#[test]
fn usage_and_capacity_errors() {
    assert_eq!(longcode(&["fixture", "nope"]).status.code(), Some(2));
    assert_eq!(longcode(&["estimate"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("ms.json");
    let f = json(&longcode(&["fixture", "magic_square"]));
    std::fs::write(&game, serde_json::to_vec(&f["game"]).unwrap()).unwrap();
    let out = longcode(&["transform", game.to_str().unwrap(), "--pass", "repeat", "--u", "3"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let out = longcode(&["transform", game.to_str().unwrap(), "--pass", "nonempty"]);
    assert!(out.status.success());
}
