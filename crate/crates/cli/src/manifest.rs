//! `manifest.json`: what was run, on which data, and what it produced.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Dataset {
    pub path: PathBuf,
    pub sha256: String,
    pub months: usize,
    pub assets: usize,
    pub first_month: String,
    pub last_month: String,
    pub dropped_assets: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub status: Status,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub output_dir: PathBuf,
    pub config: serde_json::Value,
    pub dataset: Option<Dataset>,
    pub files: Vec<String>,
    pub notes: Vec<String>,
    pub error: Option<String>,
    #[serde(skip)]
    path: PathBuf,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let file = File::open(path)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader
            .read(&mut buf)
            .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Manifest {
    pub fn new(command: &str, output_dir: &Path, config: impl Serialize) -> Result<Self, Failure> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            status: Status::Running,
            started_unix: unix_now(),
            finished_unix: None,
            output_dir: output_dir.to_path_buf(),
            config: serde_json::to_value(config)
                .map_err(|e| Failure::config(format!("cannot record config: {e}")))?,
            dataset: None,
            files: Vec::new(),
            notes: Vec::new(),
            error: None,
            path: output_dir.join(MANIFEST_FILE),
        })
    }

    pub fn with_path(mut self, path: PathBuf) -> Self {
        self.path = path;
        self
    }

    /// Rewrites the manifest in place.
    pub fn save(&self) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Failure::config(format!("cannot encode manifest: {e}")))?;
        let tmp = self.path.with_extension("json.tmp");
        std::fs::write(&tmp, text + "\n")
            .and_then(|_| std::fs::rename(&tmp, &self.path))
            .map_err(|e| Failure::config(format!("cannot write {}: {e}", self.path.display())))
    }

    pub fn finish(&mut self, outcome: &Result<(), Failure>) -> Result<(), Failure> {
        self.finished_unix = Some(unix_now());
        match outcome {
            Ok(()) => self.status = Status::Complete,
            Err(e) => {
                self.status = Status::Failed;
                self.error = Some(e.message.clone());
            }
        }
        self.save()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc.txt");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn save_then_finish_updates_status() {
        let dir = tempfile::tempdir().unwrap();
        let mut m =
            Manifest::new("backtest", dir.path(), serde_json::json!({"t_is": 120})).unwrap();
        m.save().unwrap();
        let running: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap())
                .unwrap();
        assert_eq!(running["status"], "running");
        m.finish(&Err(Failure::data("boom"))).unwrap();
        let done: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap())
                .unwrap();
        assert_eq!(done["status"], "failed");
        assert_eq!(done["error"], "boom");
        assert!(done["finished_unix"].as_u64().is_some());
    }
}
