#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_timebound");

/// Runs the binary with `--out-dir dir`, clearing any inherited out-dir.
pub fn run(dir: &Path, args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("TIMEBOUND_OUT_DIR");
    if let Some(n) = threads {
        cmd.env("RAYON_NUM_THREADS", n.to_string());
    }
    cmd.output().expect("spawn timebound")
}

/// Every file in `dir` except the manifest (whose runtime field varies).
pub fn result_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("read out dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&p).expect("read result file"))
        })
        .collect()
}

/// The manifest with `runtime_ms` removed.
pub fn stable_manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).expect("manifest");
    let mut v: serde_json::Value = serde_json::from_str(&text).expect("manifest json");
    v.as_object_mut().unwrap().remove("runtime_ms");
    v
}

/// Invocations exercising every seeded or data-parallel path.
pub const SEEDED_RUNS: &[&[&str]] = &[
    &[
        "simulate",
        "--preset",
        "stress_vol",
        "--seed",
        "11",
        "--n-days",
        "60",
    ],
    &[
        "simulate",
        "--preset",
        "base",
        "--seed",
        "5",
        "--n-seeds",
        "3",
        "--n-days",
        "40",
        "--format",
        "csv",
    ],
    &[
        "discrepancy",
        "--sigmas",
        "0.3",
        "--days",
        "1,3",
        "--paths",
        "50000",
        "--seed",
        "8",
    ],
    &["backtest", "--format", "csv"],
    &["figures", "--which", "all", "--seed", "3"],
    &["price", "--sigma", "0.3", "--days", "3", "--ltv", "0.95"],
];
