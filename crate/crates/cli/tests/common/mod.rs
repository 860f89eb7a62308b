#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SUBCOMMANDS: [&str; 7] = [
    "calibrate",
    "solve",
    "integrate",
    "relight",
    "sweep",
    "fit-ptm",
    "export-viewer",
];

pub fn lumen3d(args: &[&str], job: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lumen3d"))
        .args(args)
        .arg("--job")
        .arg(job)
        .env("LUMEN3D_THREADS", "2")
        .output()
        .expect("spawn lumen3d")
}

/// Runs a subcommand and returns its exit code, printing stderr on failure.
pub fn code(args: &[&str], job: &Path) -> i32 {
    let out = lumen3d(args, job);
    let code = out.status.code().unwrap_or(-1);
    if code != 0 {
        eprintln!("{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    code
}

pub fn validate_manifest(path: &Path) -> Result<(), String> {
    let schema: serde_json::Value =
        serde_json::from_str(lumen3d_cli::BUNDLE_MANIFEST_SCHEMA).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let instance: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let validator = jsonschema::validator_for(&schema).map_err(|e| e.to_string())?;
    let errors: Vec<String> = validator
        .iter_errors(&instance)
        .map(|e| e.to_string())
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors.join("; "))
    }
}

/// Every file below `dir` with the given extension, sorted.
pub fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == ext) {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

/// Rewrites a job file through `edit`.
pub fn edit_job(job: &Path, edit: impl FnOnce(&mut serde_json::Value)) {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(job).unwrap()).unwrap();
    edit(&mut v);
    std::fs::write(job, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}
