//! On-disk checkpoint store: one directory per checkpoint id.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CheckpointId, EpochStats, LmError, TrainConfig};
use crate::io;

/// Metadata record written next to a fine-tuning run's epoch checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub output: CheckpointId,
    pub base: CheckpointId,
    pub config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    pub selected: CheckpointId,
}

#[derive(Debug, Clone)]
pub struct CheckpointStore {
    root: PathBuf,
}

impl CheckpointStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        CheckpointStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory for `id`. Path separators in the id nest directories;
    /// `:` is stored as `@` so ids like `mlm-silver-separate:RiverBasinsCountry`
    /// are valid file names everywhere.
    pub fn dir(&self, id: &CheckpointId) -> Result<PathBuf, LmError> {
        let mut p = self.root.clone();
        for part in id.as_str().split('/') {
            if part.is_empty() || part == "." || part == ".." {
                return Err(LmError::Config(format!("invalid checkpoint id `{id}`")));
            }
            p.push(part.replace(':', "@"));
        }
        Ok(p)
    }

    pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LmError + '_ {
        move |source| LmError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn write_metadata(&self, meta: &RunMetadata) -> Result<(), LmError> {
        let path = self.dir(&meta.output)?.join("run.json");
        io::write_json(&path, meta).map_err(Self::io_err(&path))
    }

    pub fn read_metadata(&self, output: &CheckpointId) -> Result<RunMetadata, LmError> {
        let path = self.dir(output)?.join("run.json");
        io::read_json(&path).map_err(Self::io_err(&path))
    }

    /// Take the exclusive lock on `output`'s directory for a training run.
    pub fn lock(&self, output: &CheckpointId) -> Result<DirLock, LmError> {
        let dir = self.dir(output)?;
        fs::create_dir_all(&dir).map_err(Self::io_err(&dir))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(LmError::Locked(dir)),
            Err(source) => Err(LmError::Io { path, source }),
        }
    }
}

/// Held for the duration of a fine-tuning run; removes the lock file on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
