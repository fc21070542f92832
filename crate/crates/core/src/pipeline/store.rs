//! Run directory bookkeeping. Every step writes its files, then a `done.json`
//! marker recording the configuration hash and the SHA-256 of each file. A
//! step with a valid marker is skipped on re-runs; a marker whose files no
//! longer match is an integrity error, never a reason to recompute.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

const MARKER: &str = "done.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Marker {
    config_sha256: String,
    files: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub(crate) struct Store {
    root: PathBuf,
    config_sha256: String,
}

impl Store {
    /// Opens (or initializes) a run directory for a resolved configuration.
    /// The echoed configuration is written on first use; an existing run
    /// directory created from a different configuration is refused.
    pub fn open(root: &Path, config_toml: &str) -> Result<Store> {
        let config_sha256 = io::sha256_hex(config_toml.as_bytes());
        let config_path = root.join("config.toml");
        if config_path.exists() {
            let existing = io::read(&config_path)?;
            if io::sha256_hex(&existing) != config_sha256 {
                return Err(Error::integrity(
                    &config_path,
                    "run directory was created with a different configuration; \
                     use a new run_id or remove the directory",
                ));
            }
        } else {
            io::write_atomic(&config_path, config_toml.as_bytes())?;
        }
        Ok(Store {
            root: root.to_path_buf(),
            config_sha256,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, step: &str, file: &str) -> PathBuf {
        self.root.join(step).join(file)
    }

    /// Whether `step` has completed. Verifies every recorded file.
    pub fn completed(&self, step: &str) -> Result<bool> {
        let marker_path = self.path(step, MARKER);
        if !marker_path.exists() {
            return Ok(false);
        }
        let text = io::read_string(&marker_path)?;
        let marker: Marker = serde_json::from_str(&text).map_err(|e| {
            Error::integrity(&marker_path, format!("unreadable completion marker: {e}"))
        })?;
        if marker.config_sha256 != self.config_sha256 {
            return Err(Error::integrity(
                &marker_path,
                "step was completed under a different configuration",
            ));
        }
        for (file, expected) in &marker.files {
            let path = self.path(step, file);
            if !path.exists() {
                return Err(Error::integrity(&path, "artifact recorded as complete is missing"));
            }
            if io::sha256_hex(&io::read(&path)?) != *expected {
                return Err(Error::integrity(&path, "artifact checksum does not match its record"));
            }
        }
        Ok(true)
    }

    /// Records `files` (already written under the step directory) as the
    /// step's output.
    pub fn commit(&self, step: &str, files: &[String]) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for f in files {
            hashes.insert(f.clone(), io::sha256_hex(&io::read(&self.path(step, f))?));
        }
        let marker = Marker {
            config_sha256: self.config_sha256.clone(),
            files: hashes,
        };
        let json = serde_json::to_string_pretty(&marker).expect("marker serializes");
        io::write_atomic(&self.path(step, MARKER), json.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_then_verify_then_detect_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path(), "seed = 1\n").unwrap();
        assert!(!store.completed("s").unwrap());
        io::write_atomic(&store.path("s", "a.txt"), b"hello").unwrap();
        store.commit("s", &["a.txt".into()]).unwrap();
        assert!(store.completed("s").unwrap());
        std::fs::write(store.path("s", "a.txt"), b"hellO").unwrap();
        let err = store.completed("s").unwrap_err();
        assert!(matches!(&err, Error::Integrity { path, .. } if path.ends_with("a.txt")));
        std::fs::remove_file(store.path("s", "a.txt")).unwrap();
        assert!(matches!(store.completed("s"), Err(Error::Integrity { .. })));
    }

    #[test]
    fn a_different_config_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        Store::open(dir.path(), "seed = 1\n").unwrap();
        Store::open(dir.path(), "seed = 1\n").unwrap();
        assert!(matches!(
            Store::open(dir.path(), "seed = 2\n"),
            Err(Error::Integrity { .. })
        ));
    }
}
