//! Run manifests: the resolved configuration plus a hashed inventory of
//! every artifact a run produced, sufficient to replay it bit-exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the run directory, forward slashes.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    /// Experiment kind: evolve, flexibility, scalability or behavior.
    pub kind: String,
    pub config: ExperimentConfig,
    /// Kind-specific extras (e.g. the behavior arena).
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
    /// Set when the run aborted and the inventory covers partial output.
    #[serde(default)]
    pub partial: bool,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn new(kind: &str, config: ExperimentConfig) -> Self {
        RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            kind: kind.to_string(),
            config,
            extra: serde_json::Map::new(),
            partial: false,
            files: Vec::new(),
        }
    }

    /// Hashes everything under `dir` (except the manifest itself) and
    /// writes the manifest there.
    pub fn finalize(mut self, dir: &Path) -> Result<RunManifest> {
        self.files = inventory(dir)?;
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(self)
    }

    pub fn read(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text =
            std::fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }
}

/// Recursive listing of `dir` with content hashes, sorted by relative
/// path so the inventory order is stable.
pub fn inventory(dir: &Path) -> Result<Vec<FileEntry>> {
    let mut paths = Vec::new();
    collect_files(dir, dir, &mut paths)?;
    paths.sort();
    let mut entries = Vec::with_capacity(paths.len());
    for rel in paths {
        if rel == MANIFEST_FILE {
            continue;
        }
        let full = dir.join(&rel);
        let bytes = std::fs::read(&full).map_err(|e| Error::io(full.display().to_string(), e))?;
        entries.push(FileEntry {
            path: rel,
            sha256: sha256_hex(&bytes),
        });
    }
    Ok(entries)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let read = std::fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for entry in read {
        let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("entry lives under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            out.push(rel);
        }
    }
    Ok(())
}

/// Result of re-running an experiment from its manifest and comparing
/// artifacts byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub kind: String,
    pub compared: usize,
    pub mismatched: Vec<String>,
    pub missing: Vec<String>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatched.is_empty() && self.missing.is_empty()
    }
}

/// Compares every manifest-listed file between the original run and a
/// regenerated copy.
pub fn compare_outputs(manifest: &RunManifest, original: &Path, regenerated: &Path) -> ReplayReport {
    let mut report = ReplayReport {
        kind: manifest.kind.clone(),
        compared: 0,
        mismatched: Vec::new(),
        missing: Vec::new(),
    };
    for entry in &manifest.files {
        let a: PathBuf = original.join(&entry.path);
        let b: PathBuf = regenerated.join(&entry.path);
        match (std::fs::read(&a), std::fs::read(&b)) {
            (Ok(x), Ok(y)) => {
                report.compared += 1;
                if x != y {
                    report.mismatched.push(entry.path.clone());
                }
            }
            _ => report.missing.push(entry.path.clone()),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn inventory_is_sorted_and_skips_manifest() {
        let dir = std::env::temp_dir().join(format!("evoswarm-inv-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(dir.join("sub")).unwrap();
        std::fs::write(dir.join("b.txt"), "b").unwrap();
        std::fs::write(dir.join("a.txt"), "a").unwrap();
        std::fs::write(dir.join("sub/c.txt"), "c").unwrap();
        std::fs::write(dir.join(MANIFEST_FILE), "{}").unwrap();
        let entries = inventory(&dir).unwrap();
        let paths: Vec<&str> = entries.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, vec!["a.txt", "b.txt", "sub/c.txt"]);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
