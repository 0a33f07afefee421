//! Run directory bookkeeping: every file written goes through [`RunDir`],
//! which hashes it for MANIFEST.json. No timestamps are recorded, so a rerun
//! from resolved_config.json reproduces the directory byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub description: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    inputs: &'a [FileEntry],
    outputs: &'a [FileEntry],
}

pub struct RunDir {
    root: PathBuf,
    command: &'static str,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunDir {
    pub fn create(root: &Path, command: &'static str) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(RunDir {
            root: root.to_path_buf(),
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn record_input(&mut self, path: &Path, description: &str) -> std::io::Result<()> {
        let bytes = fs::read(path)?;
        self.inputs.push(FileEntry {
            path: path.display().to_string(),
            description: description.into(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write(&mut self, name: &str, description: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.root.join(name), bytes)?;
        self.outputs.push(FileEntry {
            path: name.into(),
            description: description.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(
        &mut self,
        name: &str,
        description: &str,
        value: &T,
    ) -> std::io::Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        s.push('\n');
        self.write(name, description, s.as_bytes())
    }

    /// Write through a closure that fills a byte buffer.
    pub fn write_with<E>(
        &mut self,
        name: &str,
        description: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> Result<(), E>
    where
        E: From<std::io::Error>,
    {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, description, &buf)?;
        Ok(())
    }

    /// Echo the resolved configuration and write the manifest last.
    pub fn finish(mut self, config: &RunConfig) -> std::io::Result<PathBuf> {
        self.write_json(
            "resolved_config.json",
            "configuration after flag overrides",
            config,
        )?;
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        s.push('\n');
        fs::write(self.root.join("MANIFEST.json"), s)?;
        Ok(self.root)
    }
}
