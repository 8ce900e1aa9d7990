use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// On-disk project layout: `manifests/`, `features/`, `models/`, `sessions/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub const DIRS: [&'static str; 4] = ["manifests", "features", "models", "sessions"];

    /// Open `root`, creating any missing subdirectories.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for d in Self::DIRS {
            let p = root.join(d);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self, name: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{name}.jsonl"))
    }

    pub fn features(&self, name: &str) -> PathBuf {
        self.root.join("features").join(format!("{name}.feat"))
    }

    pub fn model(&self, name: &str) -> PathBuf {
        self.root.join("models").join(format!("{name}.model"))
    }

    pub fn session_log(&self, name: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{name}.jsonl"))
    }
}
