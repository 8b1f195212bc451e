//! Persistence: datasets, checkpoints, box caches, textures and run logs.

pub mod boxcache;
pub mod checkpoint;
pub mod dataset;
pub mod imageio;
pub mod runlog;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Environment variable that relocates the box cache directory.
pub const CACHE_DIR_ENV: &str = "ADVTEX_CACHE_DIR";

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Subdirectories of a run directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn create(&self) -> Result<()> {
        for dir in [self.checkpoints(), self.textures(), self.logs(), self.eval()] {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(())
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn textures(&self) -> PathBuf {
        self.root.join("textures")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    /// Box cache directory: `$ADVTEX_CACHE_DIR` if set, else `<run>/cache`.
    pub fn cache(&self) -> PathBuf {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.root.join("cache"),
        }
    }

    pub fn box_cache(&self, detector: &str, split: &str) -> PathBuf {
        self.cache().join(format!("boxes-{detector}-{split}.txt"))
    }
}
