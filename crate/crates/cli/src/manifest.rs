//! Run manifests: what was run, with which seeds and inputs, and what it
//! wrote.

use std::fs;
use std::path::{Path, PathBuf};

use nodepred::io::{self, kind, FORMAT_VERSION};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(role: &str, path: &Path) -> nodepred::Result<FileRecord> {
        Ok(FileRecord {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: String,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name; `replay` parses them again.
    pub args: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: PathBuf,
    /// Every resolved parameter, defaults included.
    pub parameters: serde_json::Value,
    /// Every seed used, by stage.
    pub seeds: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub artifacts: Vec<FileRecord>,
    pub threads: u64,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: i32,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, threads: u64) -> RunManifest {
        RunManifest {
            format_version: FORMAT_VERSION.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args,
            cwd: std::env::current_dir().unwrap_or_default(),
            parameters: serde_json::Value::Null,
            seeds: serde_json::Value::Null,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            threads,
            started_at: now(),
            finished_at: String::new(),
            exit_code: 0,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> nodepred::Result<()> {
        self.inputs.push(FileRecord::of(role, path)?);
        Ok(())
    }

    pub fn artifact(&mut self, role: &str, path: &Path) -> nodepred::Result<()> {
        self.artifacts.push(FileRecord::of(role, path)?);
        Ok(())
    }

    pub fn artifact_by_role(&self, role: &str) -> Option<&FileRecord> {
        self.artifacts.iter().find(|a| a.role == role)
    }

    pub fn write(&mut self, dir: &Path, exit_code: i32) -> nodepred::Result<PathBuf> {
        self.finished_at = now();
        self.exit_code = exit_code;
        let path = dir.join(MANIFEST_FILE);
        io::write_json(&path, kind::MANIFEST, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> nodepred::Result<RunManifest> {
        io::read_json(path, kind::MANIFEST)
    }
}

pub fn sha256_file(path: &Path) -> nodepred::Result<String> {
    let bytes = fs::read(path)
        .map_err(|e| nodepred::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
