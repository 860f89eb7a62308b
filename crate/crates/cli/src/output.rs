//! Stage output directories, the per-directory lock and `run.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{config, CliResult};
use crate::job::Job;

pub const RUN_FILE: &str = "run.json";
pub const LOCK_FILE: &str = ".lumen3d.lock";

#[derive(Debug, Serialize)]
struct StageTime {
    name: String,
    wall_seconds: f64,
}

#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    job: String,
    config_hash: &'a str,
    stages: &'a [StageTime],
    total_wall_seconds: f64,
    metadata: &'a Map<String, Value>,
}

/// An in-progress subcommand writing into `<output_dir>/<command>/`.
///
/// Holds the output directory lock until dropped.
pub struct StageRun<'a> {
    job: &'a Job,
    command: &'a str,
    dir: PathBuf,
    lock: PathBuf,
    started: Instant,
    stages: Vec<StageTime>,
    metadata: Map<String, Value>,
}

impl<'a> StageRun<'a> {
    pub fn begin(job: &'a Job, command: &'a str, force: bool) -> CliResult<Self> {
        let out = &job.config.output_dir;
        std::fs::create_dir_all(out)
            .map_err(|e| config(format!("cannot create {}: {e}", out.display())))?;
        let lock = out.join(LOCK_FILE);
        std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => config(format!(
                    "{} is locked by another run (remove {} if stale)",
                    out.display(),
                    lock.display()
                )),
                _ => config(format!("cannot lock {}: {e}", out.display())),
            })?;
        // from here on the lock is released on drop
        let mut run = Self {
            job,
            command,
            dir: job.stage_dir(command),
            lock,
            started: Instant::now(),
            stages: Vec::new(),
            metadata: Map::new(),
        };
        run.prepare_dir(force)?;
        Ok(run)
    }

    fn prepare_dir(&mut self, force: bool) -> CliResult<()> {
        if self.dir.exists() {
            if !force {
                return Err(config(format!(
                    "{} already exists; pass --force to overwrite",
                    self.dir.display()
                )));
            }
            std::fs::remove_dir_all(&self.dir)
                .map_err(|e| config(format!("cannot clear {}: {e}", self.dir.display())))?;
        }
        std::fs::create_dir_all(&self.dir)
            .map_err(|e| config(format!("cannot create {}: {e}", self.dir.display())))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Runs `f` with the output directory and records its wall time under `name`.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&Path) -> CliResult<T>) -> CliResult<T> {
        let t = Instant::now();
        let out = f(&self.dir)?;
        let wall_seconds = t.elapsed().as_secs_f64();
        log::info!("{}/{name}: {wall_seconds:.3} s", self.command);
        self.stages.push(StageTime {
            name: name.into(),
            wall_seconds,
        });
        Ok(out)
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("serializable metadata");
        self.metadata.insert(key.into(), value);
    }

    pub fn finish(self) -> CliResult<()> {
        let record = RunRecord {
            tool: "lumen3d",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            job: self.job.path.display().to_string(),
            config_hash: &self.job.config_hash,
            stages: &self.stages,
            total_wall_seconds: self.started.elapsed().as_secs_f64(),
            metadata: &self.metadata,
        };
        let path = self.path(RUN_FILE);
        let text = serde_json::to_string_pretty(&record).expect("serializable record");
        std::fs::write(&path, text + "\n").map_err(|e| lumen3d_core::Error::io(&path, e))?;
        Ok(())
    }
}

impl Drop for StageRun<'_> {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}
