use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::disentangle::LossBreakdown;
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cdgnn,
    Gcn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Cdgnn => "cdgnn",
            ModelKind::Gcn => "gcn",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Means over the epoch's training batches.
    pub losses: LossBreakdown,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    pub config: RunConfig,
    pub dataset: String,
    /// Git-style blob hash (SHA-256) of the graph's JSON serialization.
    pub dataset_hash: String,
    pub h_l: f64,
    pub h_f: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_time_secs: f64,
}

/// `sha256("blob <len>\0" ++ bytes)`, hex-encoded.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()));
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn dataset_hash(g: &Graph) -> Result<String> {
    Ok(blob_hash(g.to_json()?.as_bytes()))
}

impl RunRecord {
    /// Everything but the wall-clock time, which no two executions share.
    pub fn same_run(&self, other: &RunRecord) -> bool {
        let strip = |r: &RunRecord| RunRecord {
            wall_time_secs: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    /// Losses of the epoch whose parameters were kept.
    pub fn best_losses(&self) -> LossBreakdown {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map(|e| e.losses)
            .unwrap_or_default()
    }

    pub fn file_name(&self) -> String {
        let mut keyed = self.config.clone();
        keyed.dataset = format!("{}:{}", self.model, self.config.dataset);
        format!("{}-{}.json", self.model, &keyed.hash()[..16])
    }

    /// Writes `<dir>/<model>-<config hash>.json` and returns the path.
    pub fn save_in(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(self.file_name());
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}
