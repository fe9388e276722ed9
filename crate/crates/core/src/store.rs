//! Content-addressed JSON artifact store.
//!
//! Every payload is written as canonical JSON (sorted keys, shortest
//! round-trip floats) to `artifacts/<sha256>.json`; `manifest.json` maps each
//! artifact kind to its hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("missing artifact: {0}")]
    Missing(String),
    #[error("artifact {kind} does not match its hash {hash}")]
    Integrity { kind: String, hash: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type StoreResult<T> = std::result::Result<T, StoreError>;

/// Pretty-printed JSON with sorted object keys and a trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> StoreResult<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub hash: String,
    pub file: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn manifest(&self) -> StoreResult<Manifest> {
        let path = self.manifest_path();
        if !path.exists() {
            return Err(StoreError::Missing(path.display().to_string()));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn manifest_or_empty(&self) -> StoreResult<Manifest> {
        match self.manifest() {
            Err(StoreError::Missing(_)) => Ok(Manifest::default()),
            other => other,
        }
    }

    /// Writes `value` under `kind` and returns its hash.
    pub fn put<T: Serialize>(&self, kind: &str, value: &T) -> StoreResult<String> {
        let text = canonical_json(value)?;
        let hash = sha256_hex(text.as_bytes());
        let dir = self.root.join("artifacts");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let file = format!("artifacts/{hash}.json");
        let path = self.root.join(&file);
        fs::write(&path, &text).map_err(io_err(&path))?;
        let mut manifest = self.manifest_or_empty()?;
        manifest.artifacts.insert(
            kind.to_string(),
            ManifestEntry {
                hash: hash.clone(),
                file,
            },
        );
        let path = self.manifest_path();
        fs::write(&path, canonical_json(&manifest)?).map_err(io_err(&path))?;
        Ok(hash)
    }

    /// Raw text of an artifact after checking it against its hash.
    pub fn get_text(&self, kind: &str) -> StoreResult<String> {
        let manifest = self.manifest()?;
        let entry = manifest
            .artifacts
            .get(kind)
            .ok_or_else(|| StoreError::Missing(kind.to_string()))?;
        let path = self.root.join(&entry.file);
        if !path.exists() {
            return Err(StoreError::Missing(path.display().to_string()));
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        if sha256_hex(text.as_bytes()) != entry.hash {
            return Err(StoreError::Integrity {
                kind: kind.to_string(),
                hash: entry.hash.clone(),
            });
        }
        Ok(text)
    }

    pub fn get<T: DeserializeOwned>(&self, kind: &str) -> StoreResult<T> {
        Ok(serde_json::from_str(&self.get_text(kind)?)?)
    }

    /// Hash check of every artifact in the manifest.
    pub fn integrity(&self) -> StoreResult<Vec<(String, bool)>> {
        let manifest = self.manifest()?;
        Ok(manifest
            .artifacts
            .keys()
            .map(|k| (k.clone(), self.get_text(k).is_ok()))
            .collect())
    }

    /// Writes a plain file below the store root.
    pub fn write_file(&self, relative: &str, contents: &[u8]) -> StoreResult<PathBuf> {
        let path = self.root.join(relative);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, contents).map_err(io_err(&path))?;
        Ok(path)
    }
}
