//! `timebound` command-line tool.
//!
//! Every run writes its result files plus `manifest.json` into the output
//! directory (`--out-dir`, else `$TIMEBOUND_OUT_DIR`, else
//! `timebound-out`). The manifest records the fully resolved request, so
//! `timebound replay --manifest <path>` reproduces the same files.
//!
//! Failures print one JSON object `{"error": {"kind", "message"}}` on
//! stderr and exit with status 1 (2 for usage errors).

mod args;
mod output;
mod request;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use timebound_core::exec::RNG_ALGORITHM;
use timebound_core::Exec;

use args::{Cli, Command, ConfigFile, Format};
use output::Output;
use request::Request;

/// Argument problems detected after parsing (missing or conflicting inputs).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const DEFAULT_OUT_DIR: &str = "timebound-out";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct OutputFile {
    file: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    tool: String,
    version: String,
    command: String,
    rng_algorithm: String,
    format: Format,
    seeds: Vec<u64>,
    request: Request,
    outputs: Vec<OutputFile>,
    runtime_ms: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_outputs(dir: &Path, out: &Output) -> Result<Vec<OutputFile>> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    out.files
        .iter()
        .map(|a| {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.bytes)
                .with_context(|| format!("cannot write {}", path.display()))?;
            Ok(OutputFile {
                file: a.name.clone(),
                bytes: a.bytes.len(),
                sha256: sha256_hex(&a.bytes),
            })
        })
        .collect()
}

fn run_request(
    req: Request,
    exec: Exec,
    format: Format,
    dir: &Path,
) -> Result<(Output, Vec<OutputFile>)> {
    let start = Instant::now();
    let out = request::execute(&req, exec, format)?;
    let outputs = write_outputs(dir, &out)?;
    let manifest = RunManifest {
        tool: "timebound".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: req.command().into(),
        rng_algorithm: RNG_ALGORITHM.into(),
        format,
        seeds: req.seeds(),
        request: req,
        outputs: outputs
            .iter()
            .map(|o| OutputFile {
                file: o.file.clone(),
                bytes: o.bytes,
                sha256: o.sha256.clone(),
            })
            .collect(),
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    std::fs::write(dir.join(MANIFEST), output::json_bytes(&manifest)?)?;
    Ok((out, outputs))
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));

    let (out, _) = match &cli.command {
        Command::Replay(r) => {
            let text = std::fs::read_to_string(&r.manifest)
                .with_context(|| format!("cannot read manifest {}", r.manifest.display()))?;
            let recorded: RunManifest = serde_json::from_str(&text).context("invalid manifest")?;
            let format = cli.format.unwrap_or(recorded.format);
            let result = run_request(recorded.request, exec, format, &dir)?;
            if r.verify {
                let mut mismatched = Vec::new();
                for (old, new) in recorded.outputs.iter().zip(&result.1) {
                    if old.file != new.file || old.sha256 != new.sha256 {
                        mismatched.push(old.file.clone());
                    }
                }
                if recorded.outputs.len() != result.1.len() {
                    mismatched.push("<file list>".into());
                }
                if !mismatched.is_empty() {
                    bail!("replay differs from manifest: {}", mismatched.join(", "));
                }
                eprintln!("replay verified: {} files identical", result.1.len());
            }
            result
        }
        command => {
            let req = request::resolve(command, &cfg).map_err(|e| {
                match e.downcast::<timebound_core::Error>() {
                    Ok(core) => anyhow::Error::new(core),
                    Err(other) => anyhow::Error::new(UsageError(format!("{other:#}"))),
                }
            })?;
            let format = cli.format.or(cfg.format).unwrap_or_default();
            run_request(req, exec, format, &dir)?
        }
    };
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", out.stdout);
    Ok(())
}

fn error_record(kind: &str, message: &str) -> String {
    serde_json::json!({"error": {"kind": kind, "message": message}}).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_record("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("{}", error_record("usage", &format!("{e:#}")));
                return ExitCode::from(2);
            }
            let kind = e
                .downcast_ref::<timebound_core::Error>()
                .map_or("runtime", |c| c.kind());
            eprintln!("{}", error_record(kind, &format!("{e:#}")));
            ExitCode::from(1)
        }
    }
}
