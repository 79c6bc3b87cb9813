//! Output directories and the manifest that lists every emitted file with its digest.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> std::io::Result<(u64, String)> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((total, hex::encode(h.finalize())))
}

/// A directory of outputs. Files are registered as they are created and digested
/// when the manifest is written.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Opens `name` (relative, may contain subdirectories) for writing.
    pub fn writer(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn records(&self) -> Result<Vec<FileRecord>, CliError> {
        self.files
            .iter()
            .map(|f| {
                let (bytes, sha256) = sha256_file(&self.root.join(f))?;
                Ok(FileRecord {
                    file: f.clone(),
                    bytes,
                    sha256,
                })
            })
            .collect()
    }

    /// Writes `manifest.json` listing every file emitted so far.
    pub fn finish(self, mut manifest: Manifest) -> Result<(), CliError> {
        manifest.outputs = self.records()?;
        manifest.finished_unix = unix_now();
        let path = self.root.join("manifest.json");
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &manifest).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config: Value,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub truncated: bool,
    pub outputs: Vec<FileRecord>,
    pub details: Value,
}

impl Manifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            started_unix: unix_now(),
            finished_unix: 0.0,
            truncated: false,
            outputs: Vec::new(),
            details: Value::Null,
        }
    }
}
