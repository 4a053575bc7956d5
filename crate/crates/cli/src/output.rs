use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::export::Table;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory, with `/` separators.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Output directory whose files are written atomically and removed again
/// unless [`OutputDir::commit`] is reached.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    created_dirs: Vec<PathBuf>,
    artifacts: Vec<Artifact>,
    committed: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root).map_err(|e| CliError::write(root.to_path_buf(), e))?;
        Ok(Self {
            root: root.to_path_buf(),
            created_root,
            created_dirs: Vec::new(),
            artifacts: Vec::new(),
            committed: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    fn write_raw(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.root.join(rel);
        let parent = target.parent().unwrap_or(&self.root).to_path_buf();
        if !parent.exists() {
            fs::create_dir_all(&parent).map_err(|e| CliError::write(parent.clone(), e))?;
            self.created_dirs.push(parent.clone());
        }
        let mut tmp = tempfile::NamedTempFile::new_in(&parent).map_err(|e| CliError::write(target.clone(), e))?;
        tmp.write_all(bytes)
            .and_then(|_| tmp.as_file().sync_all())
            .map_err(|e| CliError::write(target.clone(), e))?;
        tmp.persist(&target).map_err(|e| CliError::write(target.clone(), e.error))?;
        Ok(target)
    }

    /// Writes `bytes` to `rel` and records it as an artifact.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.write_raw(rel, bytes)?;
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(path)
    }

    /// Writes `<stem>.csv` and its `<stem>.meta.json` sidecar.
    pub fn write_table(&mut self, stem: &str, table: &Table, context: serde_json::Value) -> Result<PathBuf> {
        let file = format!("{stem}.csv");
        let name = Path::new(&file)
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.clone());
        let path = self.write(&file, &table.to_csv()?)?;
        self.write(&format!("{stem}.meta.json"), &table.sidecar(&name, context))?;
        Ok(path)
    }

    /// Writes the manifest (not listed as an artifact of itself) and keeps
    /// every file.
    pub fn commit(mut self, manifest_bytes: &[u8]) -> Result<PathBuf> {
        let path = self.write_raw("manifest.json", manifest_bytes)?;
        self.committed = true;
        Ok(path)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for a in &self.artifacts {
            let _ = fs::remove_file(self.root.join(&a.path));
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}
