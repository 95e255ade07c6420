use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fracstep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracstep"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {text}"))
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn plasma_run_writes_trajectory() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("traj.csv");
    let out = fracstep(&["run", "--out", path_str(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["model"], "plasma");
    assert_eq!(summary["steps"], 40);
    let u1_min = summary["final"][0]["min"].as_f64().unwrap();
    assert!(u1_min >= -1e-6, "u1 min {u1_min}");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("t,x,u1,u2,u3,u4"));
    // 41 time levels of 21 nodes each
    assert_eq!(text.lines().count(), 1 + 41 * 21);
}

#[test]
fn runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        assert!(fracstep(&["run", "--solver", "split", "--out", path_str(p)]).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn both_step_controls_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", r#"{"K0":0.5,"tau":0.1}"#);
    let out = fracstep(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn too_few_intervals_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", r#"{"M":1,"K0":0.5}"#);
    let out = fracstep(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn unknown_keys_and_flags_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", r#"{"K0":0.5,"bogus":1}"#);
    assert_eq!(fracstep(&["run", "--config", &cfg]).status.code(), Some(2));
    let out = fracstep(&["run", "--scheme", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
}

#[test]
fn bad_refinement_levels_rejected() {
    for levels in ["20,50", "20", "20,40,0"] {
        let out = fracstep(&["refine", "--levels", levels]);
        assert_eq!(out.status.code(), Some(2), "levels {levels}");
        assert_eq!(stderr_json(&out)["error"], "config");
    }
}

#[test]
fn refine_writes_table() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("refine.csv");
    let out = fracstep(&["refine", "--levels", "20,40,80", "--out", path_str(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N,CFL2,e1,e2,order1,order2"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][0], "20");
    assert_eq!(rows[2][0], "80");
    let e1: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(e1[0] > e1[1] && e1[1] > e1[2], "{e1:?}");
}

#[test]
fn plasma_index_is_one() {
    let out = fracstep(&["index"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["verdict"], 1);
    assert!(v["lemma2_det"].as_f64().unwrap() != 0.0);
}

#[test]
fn regular_leading_matrix_is_index_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "heat.json",
        r#"{"model":{"system":{"n":1,"A":[[1]],"B":[[-1]],"D":[[0]],"C0":[[0]],"C1":[[[0]]]},"initial":[0.0]},"M":10,"tau":0.01}"#,
    );
    let out = fracstep(&["index", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["verdict"], 0);
}

#[test]
fn convection_stability_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "conv.json",
        r#"{"model":{"system":{"n":2,"A":[[1,0],[0,0]],"B":[[0,0],[0,1]],"D":[[0,0],[0,0]],
            "C0":[[1,0],[0,0]],"C1":[[[0,0],[0,0]],[[0,0],[0,0]]]},"initial":[1.0,0.0]},
            "M":10,"tau":0.01,"C0":[[1,0],[0,0]]}"#,
    );
    let out = fracstep(&["stability", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let (tau, h) = (0.01, 0.1);
    // forward differencing of the transport row: the block symbol is 1/tau - 1/h at worst
    let a_norm = v["g0_inv_a_norm"].as_f64().unwrap();
    assert!((a_norm - 1.0 / (1.0 / tau - 1.0 / h)).abs() < 1e-12, "{a_norm}");
    assert_eq!(v["blocks"].as_array().unwrap().len(), 9);
    assert!(v["singular_k"].as_array().unwrap().is_empty());
    assert!(v["delta0"].as_f64().unwrap().is_finite());
}

#[test]
fn singular_step_exits_with_solver_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "sing.json",
        r#"{"model":{"system":{"n":2,"A":[[1,0],[0,0]],"B":[[-1,0],[0,0]],"D":[[0,0],[0,0]],
            "C0":[[0,0],[0,0]],"C1":[[[0,0],[0,0]],[[0,0],[0,0]]]},"initial":[1.0,0.0]},
            "M":10,"tau":0.1}"#,
    );
    let csv = dir.path().join("s.csv");
    let out = fracstep(&["run", "--config", &cfg, "--out", path_str(&csv)]);
    assert_eq!(out.status.code(), Some(3));
    let v = stderr_json(&out);
    assert_eq!(v["error"], "solver");
    assert_eq!(v["step"], 1);
    assert!((v["t"].as_f64().unwrap() - 0.1).abs() < 1e-15);
}

#[test]
fn help_exits_cleanly() {
    let out = fracstep(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("refine"));
}
