use std::path::{Path, PathBuf};

use hevtl::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
}

/// Run record written beside the artifacts. It holds no timestamps, so an
/// identical run yields an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Writes files into one directory and remembers their digests.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, Error> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("output directory {}: {e}", dir.display())))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, Error> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        let entry = ArtifactEntry {
            file: name.to_string(),
            sha256: hex(&Sha256::digest(contents.as_bytes())),
        };
        self.entries.retain(|e| e.file != name);
        self.entries.push(entry);
        Ok(path)
    }

    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.file.as_str())
    }

    pub fn finish(
        mut self,
        command: &str,
        config_digest: String,
        seed: u64,
        seeds: Vec<u64>,
    ) -> Result<PathBuf, Error> {
        let manifest = Manifest {
            tool: "hevtl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_digest,
            seed,
            seeds,
            artifacts: std::mem::take(&mut self.entries),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
