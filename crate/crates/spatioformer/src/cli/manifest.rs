//! Reproducibility stamp written next to every command's outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Digest of the fully resolved configuration as it was used, not of
    /// the file on disk, so flag overrides are captured too.
    pub config_sha256: String,
    /// Digest per input file.
    pub inputs: BTreeMap<String, String>,
    pub created_utc: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, resolved_config_json: &str) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: sha256_hex(resolved_config_json.as_bytes()),
            inputs: BTreeMap::new(),
            created_utc: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs
            .insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(out_dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}
