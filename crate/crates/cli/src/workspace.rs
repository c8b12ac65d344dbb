//! Layout of the work directory shared by all commands.

use std::path::{Path, PathBuf};

use kbpop_core::SplitName;

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn split_file(&self, name: SplitName) -> PathBuf {
        self.root.join("splits").join(format!("{name}.jsonl"))
    }

    pub fn silver(&self) -> PathBuf {
        self.root.join("silver")
    }

    pub fn mined(&self) -> PathBuf {
        self.root.join("mined")
    }

    pub fn predictions(&self, split: SplitName) -> PathBuf {
        self.root.join("predictions").join(split.as_str())
    }

    pub fn dump(&self, split: SplitName, relation: &str) -> PathBuf {
        self.predictions(split).join(format!("{relation}.jsonl"))
    }

    pub fn objects(&self, split: SplitName) -> PathBuf {
        self.predictions(split).join("objects.jsonl")
    }

    pub fn submission(&self) -> PathBuf {
        self.root.join("submission.jsonl")
    }

    pub fn registry(&self) -> PathBuf {
        self.root.join("registry.json")
    }

    pub fn training_log(&self) -> PathBuf {
        self.root.join("training.json")
    }

    pub fn selection(&self) -> PathBuf {
        self.root.join("selection.json")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}
