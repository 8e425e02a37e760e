//! The record every command writes before doing any work.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved job. Passing the manifest back as `--config` repeats
    /// the run.
    pub config: Value,
    pub seed: u64,
    pub version: String,
    pub out_dir: Option<PathBuf>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub ended_at: Option<u64>,
    /// `ok`, or the error that ended the run.
    pub outcome: Option<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    /// Records the start of a run. With an output directory the manifest is
    /// written there; otherwise it goes to stderr as one JSON line.
    pub fn begin<T: Serialize>(command: &str, job: &T, seed: u64, out_dir: Option<&Path>) -> Result<Self, CliError> {
        let m = RunManifest {
            command: command.into(),
            config: serde_json::to_value(job)?,
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            out_dir: out_dir.map(Path::to_path_buf),
            started_at: now(),
            ended_at: None,
            outcome: None,
        };
        m.write()?;
        Ok(m)
    }

    pub fn finish<T>(&mut self, result: &Result<T, CliError>) -> Result<(), CliError> {
        self.ended_at = Some(now());
        self.outcome = Some(match result {
            Ok(_) => "ok".into(),
            Err(e) => e.to_string(),
        });
        self.write()
    }

    fn write(&self) -> Result<(), CliError> {
        match &self.out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)
                    .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
                let path = dir.join(MANIFEST_FILE);
                std::fs::write(&path, serde_json::to_string_pretty(self)?)
                    .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
            }
            None => eprintln!("{}", serde_json::to_string(self)?),
        }
        Ok(())
    }
}

/// Reads a job file. A manifest is accepted in place of a plain job, in
/// which case its resolved `config` is used. Returns the job and whether
/// the file sets the value at JSON `pointer`.
pub fn load_job<T: DeserializeOwned>(path: &Path, pointer: &str) -> Result<(T, bool), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("config {} is not JSON: {e}", path.display())))?;
    if value.get("command").is_some() {
        if let Some(config) = value.get_mut("config") {
            value = config.take();
        }
    }
    let has_key = value.pointer(pointer).is_some_and(|v| !v.is_null());
    let job = serde_json::from_value(value).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
    Ok((job, has_key))
}

/// Seed precedence: flag, then job file, then `DDJSCC_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, from_file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(from_file) {
        return Ok(s);
    }
    match std::env::var("DDJSCC_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("DDJSCC_SEED=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}
