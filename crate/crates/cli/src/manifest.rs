//! `manifest.json`: config hash, versions, seeds and output hashes of a run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool_version: String,
    pub core_version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    /// Labels of the random substreams drawn from the root seed.
    pub substreams: Vec<String>,
    pub bin: Option<String>,
    /// Output file name to SHA-256.
    pub files: BTreeMap<String, String>,
    /// Outputs that were not produced, with the reason.
    pub skipped: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn read(dir: &Path) -> CliResult<Self> {
        let text = std::fs::read(dir.join(MANIFEST))
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", dir.join(MANIFEST).display())))?;
        Ok(serde_json::from_slice(&text)?)
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST), text)?;
        Ok(())
    }

    /// Fold in an earlier manifest of the same config and binning, so
    /// outputs of separate subcommands accumulate in one directory.
    pub fn merge_previous(&mut self, previous: Manifest) {
        if previous.config_sha256 != self.config_sha256 || previous.bin != self.bin {
            return;
        }
        for (k, v) in previous.files {
            self.files.entry(k).or_insert(v);
        }
        for (k, v) in previous.skipped {
            if !self.files.contains_key(&k) {
                self.skipped.entry(k).or_insert(v);
            }
        }
        for s in previous.substreams {
            if !self.substreams.contains(&s) {
                self.substreams.push(s);
            }
        }
        self.substreams.sort();
    }
}

/// Compare the manifest in `dir` against the config bytes and the files on
/// disk. Returns every mismatch found.
pub fn verify(dir: &Path, config_bytes: &[u8]) -> CliResult<Vec<String>> {
    let manifest = Manifest::read(dir)?;
    let mut problems = Vec::new();
    if sha256_hex(config_bytes) != manifest.config_sha256 {
        problems.push("config hash differs from the recorded run".to_string());
    }
    for (name, hash) in &manifest.files {
        match std::fs::read(dir.join(name)) {
            Ok(bytes) if sha256_hex(&bytes) == *hash => {}
            Ok(_) => problems.push(format!("{name} was modified")),
            Err(_) => problems.push(format!("{name} is missing")),
        }
    }
    Ok(problems)
}
