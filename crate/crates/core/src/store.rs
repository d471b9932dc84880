//! Content-addressed artifact store.
//!
//! Artifacts live at `<root>/<stage>/<key>.json`. A key is a deterministic
//! hash of the inputs that produced the artifact, so re-putting a key with
//! different bytes means the producing stage was not deterministic (or the
//! store was tampered with) and is rejected.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O failure at {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("hash mismatch: {stage}/{key} already holds different bytes")]
    HashMismatch { stage: String, key: String },
    #[error("invalid store key or stage name: {0:?}")]
    InvalidKey(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::IoFailure {
        path: path.to_path_buf(),
        source,
    }
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a sequence of parts, each length-prefixed so that part
/// boundaries cannot alias (`["ab", "c"]` differs from `["a", "bc"]`).
pub fn hash_parts<I, P>(parts: I) -> String
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let mut hasher = Sha256::new();
    for part in parts {
        let part = part.as_ref();
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone)]
pub struct PipelineStore {
    root: PathBuf,
}

fn valid_component(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != ".."
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
}

impl PipelineStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, stage: &str, key: &str) -> Result<PathBuf, StoreError> {
        if !valid_component(stage) {
            return Err(StoreError::InvalidKey(stage.to_string()));
        }
        if !valid_component(key) {
            return Err(StoreError::InvalidKey(key.to_string()));
        }
        Ok(self.root.join(stage).join(format!("{key}.json")))
    }

    /// Atomically write `artifact` under `(stage, key)`.
    ///
    /// The bytes go to a temporary file in the stage directory and are then
    /// linked into place without clobbering, so readers never observe a
    /// partial entry. Re-putting identical bytes succeeds.
    pub fn put(&self, stage: &str, key: &str, artifact: &[u8]) -> Result<PathBuf, StoreError> {
        let target = self.path_for(stage, key)?;
        let dir = target.parent().expect("stage directory");
        fs::create_dir_all(dir).map_err(io_err(dir))?;

        if let Some(existing) = self.get(stage, key)? {
            return self.compare_existing(stage, key, &existing, artifact, target);
        }

        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        tmp.write_all(artifact).map_err(io_err(dir))?;
        tmp.as_file().sync_all().map_err(io_err(dir))?;
        match tmp.persist_noclobber(&target) {
            Ok(_) => Ok(target),
            Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => {
                // lost a race against a concurrent writer of the same key
                let existing = fs::read(&target).map_err(io_err(&target))?;
                self.compare_existing(stage, key, &existing, artifact, target)
            }
            Err(e) => Err(StoreError::IoFailure {
                path: target,
                source: e.error,
            }),
        }
    }

    fn compare_existing(
        &self,
        stage: &str,
        key: &str,
        existing: &[u8],
        artifact: &[u8],
        target: PathBuf,
    ) -> Result<PathBuf, StoreError> {
        if existing == artifact {
            Ok(target)
        } else {
            Err(StoreError::HashMismatch {
                stage: stage.to_string(),
                key: key.to_string(),
            })
        }
    }

    pub fn get(&self, stage: &str, key: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let path = self.path_for(stage, key)?;
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StoreError::IoFailure { path, source: e }),
        }
    }

    /// Keys currently stored for `stage`, sorted.
    pub fn keys(&self, stage: &str) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join(stage);
        let entries = match fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StoreError::IoFailure { path: dir, source: e }),
        };
        let mut keys = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(key) = name.strip_suffix(".json") {
                keys.push(key.to_string());
            }
        }
        keys.sort();
        Ok(keys)
    }

    /// Stage directories present under the root, sorted.
    pub fn stages(&self) -> Result<Vec<String>, StoreError> {
        let entries = match fs::read_dir(&self.root) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => {
                return Err(StoreError::IoFailure {
                    path: self.root.clone(),
                    source: e,
                })
            }
        };
        let mut stages = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&self.root))?;
            if entry.path().is_dir() {
                stages.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        stages.sort();
        Ok(stages)
    }
}
