//! Run manifest and output-directory lock.

use std::collections::BTreeMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Artifact {
    pub stage: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageRecord {
    pub config_hash: String,
    /// Seconds since the Unix epoch; the only field that differs between
    /// otherwise identical runs.
    pub completed_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub toolkit: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Keyed by path relative to the output directory.
    pub artifacts: BTreeMap<String, Artifact>,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Manifest {
            toolkit: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash,
            seed,
            artifacts: BTreeMap::new(),
            stages: BTreeMap::new(),
        }
    }

    /// Loads the manifest in `dir`, or starts a fresh one. A manifest from a
    /// different configuration keeps its artifacts (they are still on disk)
    /// but loses its stage records, so nothing is skipped.
    pub fn open(dir: &Path, config_hash: &str, seed: u64) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let mut m = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str::<Manifest>(&text)
                .with_context(|| format!("parsing {}", path.display()))?,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                return Ok(Manifest::new(config_hash.into(), seed))
            }
            Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
        };
        if m.config_hash != config_hash {
            m.stages.clear();
            m.config_hash = config_hash.into();
            m.seed = seed;
        }
        Ok(m)
    }

    /// Records files written by `stage`, replacing older entries for the
    /// same paths.
    pub fn record(&mut self, dir: &Path, stage: &str, files: &[PathBuf]) -> Result<()> {
        for f in files {
            let rel = f
                .strip_prefix(dir)
                .with_context(|| format!("{} is outside the output directory", f.display()))?;
            let key = rel.to_string_lossy().replace('\\', "/");
            self.artifacts.insert(
                key,
                Artifact {
                    stage: stage.into(),
                    sha256: sha256_file(f)?,
                },
            );
        }
        self.stages.insert(
            stage.into(),
            StageRecord {
                config_hash: self.config_hash.clone(),
                completed_at: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs()),
            },
        );
        Ok(())
    }

    /// A stage is complete when it ran under the current configuration and
    /// every artifact it produced is still present.
    pub fn is_complete(&self, dir: &Path, stage: &str) -> bool {
        self.stages
            .get(stage)
            .is_some_and(|s| s.config_hash == self.config_hash)
            && self
                .artifacts
                .iter()
                .filter(|(_, a)| a.stage == stage)
                .all(|(p, _)| dir.join(p).is_file())
    }

    /// Drops entries for files that no longer exist.
    pub fn prune(&mut self, dir: &Path) {
        self.artifacts.retain(|p, _| dir.join(p).is_file());
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Exclusive ownership of an output directory for the lifetime of a command.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(LOCK);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => bail!(
                "output directory {} is in use by another run (delete {} if that run died)",
                dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        assert!(DirLock::acquire(dir.path()).is_err());
        drop(a);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn completion_needs_matching_hash_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.txt");
        fs::write(&f, "x").unwrap();
        let mut m = Manifest::new("h1".into(), 1);
        m.record(dir.path(), "segment", std::slice::from_ref(&f))
            .unwrap();
        assert!(m.is_complete(dir.path(), "segment"));
        m.save(dir.path()).unwrap();
        assert!(Manifest::open(dir.path(), "h1", 1)
            .unwrap()
            .is_complete(dir.path(), "segment"));
        assert!(!Manifest::open(dir.path(), "h2", 1)
            .unwrap()
            .is_complete(dir.path(), "segment"));
        fs::remove_file(&f).unwrap();
        assert!(!m.is_complete(dir.path(), "segment"));
    }
}
