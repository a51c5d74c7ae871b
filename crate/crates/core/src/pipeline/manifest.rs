use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance of one stage directory: the config it ran with and a checksum
/// of every file it wrote.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub participants: Vec<String>,
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    /// Checksums every file below `dir` except the manifest itself.
    pub fn collect(stage: &str, dir: &Path, config_hash: &str, seeds: &[u64], participants: &[String]) -> Result<Self> {
        let mut artifacts = BTreeMap::new();
        walk(dir, dir, &mut artifacts)?;
        Ok(Manifest {
            stage: stage.to_string(),
            config_hash: config_hash.to_string(),
            seeds: seeds.to_vec(),
            participants: participants.to_vec(),
            artifacts,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serialises") + "\n";
        fs::write(&path, text).map_err(|err| Error::io(&path, err))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
        serde_json::from_str(&text).map_err(|err| Error::Format(format!("{}: {err}", path.display())))
    }

    /// Files whose current checksum differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for (rel, digest) in &self.artifacts {
            let path = dir.join(rel);
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            if &sha256_hex(&bytes) != digest {
                changed.push(rel.clone());
            }
        }
        Ok(changed)
    }
}

fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|err| Error::io(dir, err))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|err| Error::io(dir, err))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else if path != root.join(MANIFEST_FILE) {
            let bytes = fs::read(&path).map_err(|err| Error::io(&path, err))?;
            let rel = path
                .strip_prefix(root)
                .expect("walked below root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.insert(rel, sha256_hex(&bytes));
        }
    }
    Ok(())
}
