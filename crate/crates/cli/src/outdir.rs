//! Atomic run-directory creation: everything is staged into a temp
//! directory next to the target and renamed into place on success, so a
//! failed run never leaves partial output behind.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub struct StagedDir {
    staging: PathBuf,
    target: PathBuf,
    committed: bool,
}

impl StagedDir {
    pub fn new(target: &Path) -> Result<StagedDir> {
        if target.exists() {
            bail!(
                "output directory {} already exists; choose another --output",
                target.display()
            );
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)
            .with_context(|| format!("creating parent directory {}", parent.display()))?;
        let staging = tempfile::Builder::new()
            .prefix(".vfkm-staging-")
            .tempdir_in(&parent)
            .context("creating staging directory")?
            .keep();
        Ok(StagedDir {
            staging,
            target: target.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.staging
    }

    pub fn commit(mut self) -> Result<()> {
        fs::rename(&self.staging, &self.target).with_context(|| {
            format!(
                "moving staged results {} to {}",
                self.staging.display(),
                self.target.display()
            )
        })?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for StagedDir {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}
