//! Run manifest: what produced the files in a run directory.

use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{IoError, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputChecksum {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub config_sha256: String,
    /// Resolved configuration as TOML.
    pub config: String,
    pub inputs: Vec<InputChecksum>,
    pub outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| IoError::Open(path.display().to_string(), e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, inputs: &[&Path], outputs: &[&str]) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            code_version: CODE_VERSION.into(),
            config_sha256: cfg.hash(),
            config: cfg.to_toml(),
            inputs: inputs
                .iter()
                .map(|p| Ok(InputChecksum { path: p.to_path_buf(), sha256: sha256_file(p)? }))
                .collect::<Result<_>>()?,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        crate::formats::write_json(&dir.join("manifest.json"), self)
    }
}
