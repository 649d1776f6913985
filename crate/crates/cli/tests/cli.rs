//! End-to-end tests driving the `tattle` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_tattle");

const SCHEMA: &str = r#"{
  "relation": "R",
  "attributes": [
    {"name": "Zip", "kind": "discrete", "values": ["z0", "z1", "z2"]},
    {"name": "State", "kind": "discrete", "values": ["s0", "s1", "s2"]}
  ]
}"#;

const CONSTRAINTS: &str = "dc: !(t1.Zip == t2.Zip & t1.State != t2.State)\n";

const DATA: &str = "Zip,State\nz0,s0\nz0,s0\nz1,s1\nz1,s1\nz2,s2\n";

const DIRECT_POLICY: &str = r#"[{"querier": "Q", "cells": [[0, "State"]]}]"#;

const SELECT_POLICY: &str = r#"[{
  "querier": "Q",
  "relation": "R",
  "selection": [{"attr": "Zip", "op": "==", "value": "z0"}],
  "projection": ["State"],
  "action": "deny"
}]"#;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Fixture { dir };
        f.file("schema.json", SCHEMA);
        f.file("deps.dc", CONSTRAINTS);
        f.file("data.csv", DATA);
        f.file("direct.json", DIRECT_POLICY);
        f.file("select.json", SELECT_POLICY);
        f
    }

    fn file(&self, name: &str, content: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process terminated by signal")
}

fn protect_args(f: &Fixture, policy: &str, out: &Path, report: &Path) -> Vec<String> {
    [
        "protect",
        "--data",
        f.path("data.csv").to_str().unwrap(),
        "--schema",
        f.path("schema.json").to_str().unwrap(),
        "--constraints",
        f.path("deps.dc").to_str().unwrap(),
        "--policies",
        f.path(policy).to_str().unwrap(),
        "--querier",
        "Q",
        "--out",
        out.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[test]
fn protect_then_verify_pipeline_exits_zero() {
    let f = Fixture::new();
    let view = f.path("view.csv");
    let report = f.path("report.json");
    let args = protect_args(&f, "select.json", &view, &report);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&args, &[]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // The view hides cells as \N and the report carries the format tag.
    let view_text = std::fs::read_to_string(&view).unwrap();
    assert!(view_text.contains("\\N"), "view: {view_text}");
    let report_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report_json["format"], 1);
    assert_eq!(report_json["command"], "protect");
    assert!(report_json["run"]["total_hidden"].as_u64().unwrap() >= 2);

    let verify_report = f.path("verify.json");
    let out = run(
        &[
            "verify",
            "--data",
            f.path("data.csv").to_str().unwrap(),
            "--schema",
            f.path("schema.json").to_str().unwrap(),
            "--constraints",
            f.path("deps.dc").to_str().unwrap(),
            "--view",
            view.to_str().unwrap(),
            "--policies",
            f.path("select.json").to_str().unwrap(),
            "--querier",
            "Q",
            "--report",
            verify_report.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let verify_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&verify_report).unwrap()).unwrap();
    assert_eq!(verify_json["format"], 1);
    assert_eq!(verify_json["result"]["pass"], true);
}

#[test]
fn verify_flags_sensitive_only_hiding_as_violation() {
    let f = Fixture::new();
    // Hide only the sensitive State cell of tuple 0; its FD partner reveals it.
    let leaky = f.file("leaky.csv", "Zip,State\nz0,\\N\nz0,s0\nz1,s1\nz1,s1\nz2,s2\n");
    let out = run(
        &[
            "verify",
            "--data",
            f.path("data.csv").to_str().unwrap(),
            "--schema",
            f.path("schema.json").to_str().unwrap(),
            "--constraints",
            f.path("deps.dc").to_str().unwrap(),
            "--view",
            leaky.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 4, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("violation: cell (0, 1)"), "stdout: {stdout}");
}

#[test]
fn verify_budget_exhaustion_exits_three() {
    let f = Fixture::new();
    let leaky = f.file("leaky.csv", "Zip,State\nz0,\\N\nz0,s0\nz1,s1\nz1,s1\nz2,s2\n");
    let out = run(
        &[
            "verify",
            "--data",
            f.path("data.csv").to_str().unwrap(),
            "--schema",
            f.path("schema.json").to_str().unwrap(),
            "--constraints",
            f.path("deps.dc").to_str().unwrap(),
            "--view",
            leaky.to_str().unwrap(),
        ],
        &[("TT_ORACLE_BUDGET", "1")],
    );
    assert_eq!(code(&out), 3, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn kden_without_k_is_a_usage_error() {
    let f = Fixture::new();
    let view = f.path("view.csv");
    let report = f.path("report.json");
    let mut args = protect_args(&f, "direct.json", &view, &report);
    args.push("--mode".into());
    args.push("kden".into());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = run(&args, &[]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--mode kden requires --k"));
}

#[test]
fn attack_on_protected_view_forces_nothing() {
    let f = Fixture::new();
    let view = f.path("view.csv");
    let report = f.path("report.json");
    let args = protect_args(&f, "direct.json", &view, &report);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(code(&run(&args, &[])), 0);

    let attack_report = f.path("attack.json");
    let out = run(
        &[
            "attack",
            "--data",
            f.path("data.csv").to_str().unwrap(),
            "--schema",
            f.path("schema.json").to_str().unwrap(),
            "--constraints",
            f.path("deps.dc").to_str().unwrap(),
            "--view",
            view.to_str().unwrap(),
            "--report",
            attack_report.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&attack_report).unwrap()).unwrap();
    assert_eq!(json["format"], 1);
    assert_eq!(json["constraint_propagation"]["total"], 0);
}

#[test]
fn gen_is_seed_deterministic_and_satisfies_constraints() {
    let f = Fixture::new();
    let mut outputs = Vec::new();
    for name in ["gen1.csv", "gen2.csv"] {
        let path = f.path(name);
        let out = run(
            &[
                "gen",
                "--schema",
                f.path("schema.json").to_str().unwrap(),
                "--constraints",
                f.path("deps.dc").to_str().unwrap(),
                "--n",
                "30",
                "--seed",
                "7",
                "--out",
                path.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read_to_string(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "same seed must give identical CSVs");
    assert_eq!(outputs[0].lines().count(), 31); // header + 30 rows
}

#[test]
fn connectivity_prints_scores() {
    let f = Fixture::new();
    let report = f.path("conn.json");
    let out = run(
        &[
            "connectivity",
            "--schema",
            f.path("schema.json").to_str().unwrap(),
            "--constraints",
            f.path("deps.dc").to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Zip") && stdout.contains("State"), "stdout: {stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["format"], 1);
    assert_eq!(json["connectivity"]["scores"].as_array().unwrap().len(), 2);
}
