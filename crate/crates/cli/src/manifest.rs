use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Resolved, RunConfig, Seeds};
use crate::error::{CliResult, Context};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory, with `/` separators.
    pub path: String,
    pub sha256: String,
}

/// What a command read and wrote, with content hashes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seeds: Seeds,
    pub config: RunConfig,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).context(format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Files a command touches, collected as it runs.
#[derive(Debug)]
pub struct Tracker {
    root: PathBuf,
    inputs: BTreeSet<PathBuf>,
    outputs: BTreeSet<PathBuf>,
}

impl Tracker {
    pub fn new(root: &Path) -> Self {
        Tracker {
            root: root.to_path_buf(),
            inputs: BTreeSet::new(),
            outputs: BTreeSet::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.insert(path.to_path_buf());
    }

    /// Records `path` as written; a directory records every file under it.
    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .context(format!("listing {}", path.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()
                .context(format!("listing {}", path.display()))?;
            entries.sort();
            for e in entries {
                self.output(&e)?;
            }
        } else {
            self.outputs.insert(path.to_path_buf());
        }
        Ok(())
    }

    /// Writes `text` to `rel` under the root, creating parent directories.
    pub fn write(&mut self, rel: &str, text: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).context(format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, text).context(format!("writing {}", path.display()))?;
        self.outputs.insert(path.clone());
        Ok(path)
    }

    fn entries(&self, paths: &BTreeSet<PathBuf>) -> CliResult<Vec<FileEntry>> {
        paths
            .iter()
            .map(|p| {
                let rel = p.strip_prefix(&self.root).unwrap_or(p);
                let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                Ok(FileEntry {
                    path,
                    sha256: sha256_file(p)?,
                })
            })
            .collect()
    }

    /// Writes `manifests/<command>.json` and returns the manifest.
    pub fn finish(self, command: &str, run: &Resolved) -> CliResult<Manifest> {
        let manifest = Manifest {
            command: command.to_string(),
            seeds: run.seeds,
            config: run.config.clone(),
            inputs: self.entries(&self.inputs)?,
            outputs: self.entries(&self.outputs)?,
        };
        let path = self.root.join("manifests").join(format!("{command}.json"));
        std::fs::create_dir_all(path.parent().expect("has parent")).context("creating manifests directory")?;
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).context(format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}
