//! Run manifests: what went in, what came out, and a deterministic run id.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use chrono::{DateTime, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut h = Sha256::new();
    let mut f = fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = io::Read::read(&mut f, &mut buf)?;
        if n == 0 {
            return Ok(hex::encode(h.finalize()));
        }
        h.update(&buf[..n]);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileEntry {
    fn of(role: &str, path: &Path) -> io::Result<Self> {
        Ok(FileEntry {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
            bytes: fs::metadata(path)?.len(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub id: String,
    pub command: String,
    pub args: Vec<String>,
    pub version: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
    pub counts: BTreeMap<String, u64>,
}

/// Collects a command's inputs and outputs. The id hashes the command,
/// its arguments, the input contents, the seed and the tool version, so
/// the same run always gets the same id.
pub struct Recorder {
    command: String,
    args: Vec<String>,
    seed: Option<u64>,
    started: SystemTime,
    inputs: Vec<FileEntry>,
    outputs: Vec<(String, PathBuf)>,
    pub counts: BTreeMap<String, u64>,
}

fn stamp(t: SystemTime) -> String {
    let secs = t.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs() as i64);
    DateTime::<Utc>::from_timestamp_secs(secs).map(|d| d.to_rfc3339()).unwrap_or_default()
}

impl Recorder {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Recorder {
            command: command.to_string(),
            args,
            seed: None,
            started: SystemTime::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn input(&mut self, role: &str, path: &Path) -> io::Result<()> {
        self.inputs.push(FileEntry::of(role, path)?);
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: PathBuf) {
        self.outputs.push((role.to_string(), path));
    }

    pub fn count(&mut self, key: &str, n: u64) {
        self.counts.insert(key.to_string(), n);
    }

    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        for a in &self.args {
            h.update([0]);
            h.update(a.as_bytes());
        }
        for i in &self.inputs {
            h.update([1]);
            h.update(i.role.as_bytes());
            h.update(i.sha256.as_bytes());
        }
        h.update([2]);
        h.update(self.seed.map(|s| s.to_string()).unwrap_or_default().as_bytes());
        h.update([3]);
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    /// Hashes the outputs and writes `manifest.json` into `dir`.
    pub fn finish(self, dir: &Path) -> io::Result<Manifest> {
        let outputs = self.outputs.iter().map(|(role, p)| FileEntry::of(role, p)).collect::<io::Result<Vec<_>>>()?;
        let m = Manifest {
            id: self.id(),
            command: self.command,
            args: self.args,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            started_at: stamp(self.started),
            finished_at: stamp(SystemTime::now()),
            inputs: self.inputs,
            outputs,
            counts: self.counts,
        };
        let text = serde_json::to_string_pretty(&m).map_err(io::Error::other)?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(m)
    }
}
