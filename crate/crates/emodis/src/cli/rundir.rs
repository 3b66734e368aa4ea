//! Run directory layout: config snapshot, manifest reference, checkpoints,
//! metrics log, reports, and plots, all relative to one root.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

pub struct RunDirectory {
    root: PathBuf,
}

impl RunDirectory {
    pub fn prepare(root: &Path) -> Result<Self> {
        for dir in [root.to_path_buf(), root.join("checkpoints"), root.join("reports"), root.join("plots")] {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn plots_dir(&self) -> PathBuf {
        self.root.join("plots")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.log")
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    /// Snapshot the effective config; written before the first step.
    pub fn write_config_snapshot(&self, config: &TrainConfig) -> Result<()> {
        let path = self.config_path();
        let json = serde_json::to_string_pretty(config)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn write_manifest_ref(&self, manifest_path: &Path) -> Result<()> {
        let path = self.root.join("manifest.txt");
        std::fs::write(&path, format!("{}\n", manifest_path.display()))
            .map_err(|e| Error::io(&path, e))
    }
}
