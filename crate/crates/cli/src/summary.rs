//! Machine-readable record written next to every command's outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;
use trajsynth::trajio::{sha256_hex, write_atomic};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub wall_seconds: f64,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub details: Value,
}

pub struct Recorder {
    command: &'static str,
    seed: Option<u64>,
    started_at: String,
    start: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn start(command: &'static str, seed: Option<u64>) -> Self {
        Recorder {
            command,
            seed,
            started_at: chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            start: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Writes `contents` atomically and records the file as an output.
    pub fn write(&mut self, path: &Path, contents: &[u8]) -> anyhow::Result<()> {
        write_atomic(path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    pub fn finish(self, summary_path: &Path, details: Value) -> anyhow::Result<RunSummary> {
        let digests = |paths: &[PathBuf]| paths.iter().map(|p| FileDigest::of(p)).collect::<anyhow::Result<Vec<_>>>();
        let summary = RunSummary {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            started_at: self.started_at,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            inputs: digests(&self.inputs)?,
            outputs: digests(&self.outputs)?,
            details,
        };
        let mut json = serde_json::to_string_pretty(&summary)?;
        json.push('\n');
        write_atomic(summary_path, json.as_bytes())?;
        Ok(summary)
    }
}

/// `<file>.summary.json` for commands whose main output is a single file.
pub fn beside(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".summary.json");
    PathBuf::from(s)
}
