//! Artifact collection, atomic file writes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Seventeen significant digits, `.` decimal separator.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Files produced by a command, written together at run end.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_text(&mut self, name: &str, text: String) {
        self.add(name, text.into_bytes());
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.add_text(name, text);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }
}

#[derive(Debug, Serialize)]
struct ArtifactRecord {
    path: String,
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a BTreeMap<String, String>,
    started: String,
    finished: String,
    artifacts: Vec<ArtifactRecord>,
    exit_status: u8,
}

pub struct RunInfo<'a> {
    pub command: &'a str,
    pub config: &'a BTreeMap<String, String>,
    pub started: chrono::DateTime<chrono::Utc>,
    pub exit_status: u8,
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> io::Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, dir.join(name))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes every artifact, then `manifest.json` describing them.
pub fn write_run(dir: &Path, artifacts: &Artifacts, info: &RunInfo<'_>) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(artifacts.files.len());
    for (name, bytes) in &artifacts.files {
        write_atomic(dir, name, bytes)?;
        records.push(ArtifactRecord {
            path: name.clone(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: info.command,
        config: info.config,
        started: info.started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        artifacts: records,
        exit_status: info.exit_status,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(dir, "manifest.json", text.as_bytes())
}
