#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_taskfx"));
    c.env("RUST_LOG", "warn");
    c
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn taskfx")
}

pub fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "taskfx {args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Writes a generative config and runs `synth` into `root/data`.
pub fn synth(root: &Path, gen: Value) -> PathBuf {
    let cfg = root.join("synth.json");
    write_json(&cfg, &gen);
    let data = root.join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    data
}

/// Run config over a synthesized dataset with `n_subjects` subjects, with
/// `extra` merged on top.
pub fn run_config(root: &Path, name: &str, n_subjects: usize, extra: Value) -> PathBuf {
    let subjects: Vec<String> = (0..n_subjects)
        .map(|k| format!("data/subjects/subject_{k}"))
        .collect();
    let mut cfg = json!({
        "data": {
            "design": "data/design.csv",
            "stimulus": "data/stimulus_features.csv",
            "task": "data/task_features.csv",
            "aux_questions": "data/aux_questions.csv",
            "subjects": subjects,
        },
        "grid": {"lambdas": [0.1, 10.0, 1000.0], "lambda_as": [1.0]},
    });
    if let (Some(base), Some(more)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in more {
            base.insert(k.clone(), v.clone());
        }
    }
    let path = root.join(name);
    write_json(&path, &cfg);
    path
}

pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}
