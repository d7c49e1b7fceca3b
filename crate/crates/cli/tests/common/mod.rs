//! Helpers for driving the `gazelab` binary.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

pub struct Run {
    pub code: i32,
    pub stderr: String,
}

/// Run the binary with a clean environment for the two variables it reads.
pub fn gazelab(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gazelab"));
    cmd.args(args).env_remove("GAZELAB_OUT").env_remove("GAZELAB_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Run { code: out.status.code().unwrap_or(-1), stderr: String::from_utf8_lossy(&out.stderr).into_owned() }
}

pub fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    p
}

/// Classroom config over a planted dataset written by `synth` into `out/synth`.
pub fn planted_config(groups: usize, windows: usize, repeats: usize, shift_sd: f64, seed: u64) -> Value {
    json!({
        "seed": seed,
        "study": "classroom",
        "inputs": ["out/synth/*.jsonl"],
        "synth": {
            "n_groups_per_class": groups,
            "windows_per_group": windows,
            "effect": {"feature": "saccade_amplitude_mean", "shift_sd": shift_sd}
        },
        "model": {"grid": {"n_trees": [50]}},
        "cv": {"outer_repeats": repeats},
        "output_dir": "out"
    })
}

/// Every file under `dir` keyed by its relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}
