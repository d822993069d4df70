//! `<out>.manifest.json`: enough to rerun a command and check its outputs.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name; `replay` feeds them back verbatim.
    pub argv: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub seeds: Vec<(String, u64)>,
    pub created: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// Collects file digests while a command runs.
#[derive(Debug)]
pub struct Recorder {
    command: String,
    argv: Vec<String>,
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<(String, PathBuf)>,
    seeds: Vec<(String, u64)>,
}

impl Recorder {
    pub fn new(command: &str, argv: &[OsString]) -> Self {
        Recorder {
            command: command.into(),
            argv: argv
                .iter()
                .map(|a| a.to_string_lossy().into_owned())
                .collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: Vec::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) {
        self.inputs.push((role.into(), path.to_path_buf()));
    }

    pub fn output(&mut self, role: &str, path: &Path) {
        self.outputs.push((role.into(), path.to_path_buf()));
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.push((name.into(), value));
    }

    /// Hashes everything recorded and writes the manifest next to `primary`.
    pub fn finish(self, primary: &Path) -> Result<Manifest> {
        let digest = |files: &[(String, PathBuf)]| -> Result<Vec<FileDigest>> {
            files
                .iter()
                .map(|(role, path)| {
                    Ok(FileDigest {
                        role: role.clone(),
                        path: path.display().to_string(),
                        sha256: sha256_file(path)?,
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            tool: "sciverify".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            argv: self.argv,
            inputs: digest(&self.inputs)?,
            outputs: digest(&self.outputs)?,
            seeds: self.seeds,
            created: chrono::Utc::now().to_rfc3339(),
        };
        let path = sibling(primary, ".manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

pub fn load(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
