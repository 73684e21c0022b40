//! Versioned JSON snapshot of a session.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Batch, EmbeddingView, PaletteEntry, PoolStatus, SessionState, ToaEntry};
use crate::embed::TsneConfig;
use crate::error::{Error, Result};
use crate::ingest::{encode_f32le, load_dataset};
use crate::labels::{LabelAssignment, LabelStore};
use crate::model::{ClipId, Dataset};

pub const SESSION_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pools {
    pub labeled: Vec<ClipId>,
    pub unlabeled: Vec<ClipId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFile {
    pub version: u32,
    pub manifest_path: String,
    /// SHA-256 over clip ids, dimension and feature bytes.
    pub dataset_digest: String,
    pub dataset_round: u32,
    pub tsne_digest: String,
    pub round: u32,
    pub tsne: TsneConfig,
    pub budget_seconds: Option<f64>,
    pub toa_log: Vec<ToaEntry>,
    pub label_history: Vec<LabelAssignment>,
    pub pools: Pools,
    pub palette: Vec<PaletteEntry>,
    pub batches: Vec<Batch>,
    pub embedding: Option<EmbeddingView>,
}

pub fn dataset_digest(dataset: &Dataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update((dataset.dim() as u64).to_le_bytes());
    for clip in dataset.clips() {
        hasher.update(clip.clip_id.to_string().as_bytes());
        hasher.update([0u8]);
        hasher.update(clip.start_frame.to_le_bytes());
        hasher.update(clip.end_frame.to_le_bytes());
    }
    hasher.update(encode_f32le(dataset.raw_features()));
    hex::encode(hasher.finalize())
}

fn tsne_digest(config: &TsneConfig) -> Result<String> {
    let text = serde_json::to_string(config)?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

impl SessionState {
    pub fn to_file(&self) -> Result<SessionFile> {
        let manifest_path = self
            .manifest_path
            .as_ref()
            .ok_or_else(|| Error::Validation("session has no manifest path to persist".into()))?;
        self.snapshot_file(manifest_path.to_string_lossy().into_owned())
    }

    fn snapshot_file(&self, manifest_path: String) -> Result<SessionFile> {
        let (mut labeled, mut unlabeled) = (Vec::new(), Vec::new());
        for clip in self.dataset.clips() {
            match self.pool_status(&clip.clip_id) {
                PoolStatus::Labeled => labeled.push(clip.clip_id.clone()),
                PoolStatus::Unlabeled => unlabeled.push(clip.clip_id.clone()),
            }
        }
        labeled.sort();
        unlabeled.sort();
        Ok(SessionFile {
            version: SESSION_VERSION,
            manifest_path,
            dataset_digest: dataset_digest(&self.dataset),
            dataset_round: self.dataset.round,
            tsne_digest: tsne_digest(&self.tsne)?,
            round: self.round,
            tsne: self.tsne.clone(),
            budget_seconds: self.budget_seconds,
            toa_log: self.toa_log.clone(),
            label_history: self.labels.history().to_vec(),
            pools: Pools { labeled, unlabeled },
            palette: self.palette.clone(),
            batches: self.batches.clone(),
            embedding: self.embedding.as_deref().cloned(),
        })
    }

    /// Stable hash of the persisted state. Works for sessions that have no
    /// manifest path yet.
    pub fn fingerprint(&self) -> Result<String> {
        let manifest_path = self
            .manifest_path
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = serde_json::to_string(&self.snapshot_file(manifest_path)?)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file()?)?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    /// Loads a snapshot and the dataset its manifest points to. Relative
    /// manifest paths resolve against the snapshot's directory.
    pub fn load(path: &Path) -> Result<SessionState> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SessionFile = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        SessionState::from_file(file, base)
    }

    pub fn from_file(file: SessionFile, base: &Path) -> Result<SessionState> {
        if file.version != SESSION_VERSION {
            return Err(Error::Format(format!("unsupported session version {}", file.version)));
        }
        let stored = PathBuf::from(&file.manifest_path);
        let resolved = if stored.is_absolute() {
            stored.clone()
        } else {
            base.join(&stored)
        };
        let mut dataset = load_dataset(&resolved)?;
        dataset.round = file.dataset_round;
        if dataset_digest(&dataset) != file.dataset_digest {
            return Err(Error::Validation(format!(
                "features at {} no longer match the session snapshot",
                resolved.display()
            )));
        }
        if tsne_digest(&file.tsne)? != file.tsne_digest {
            return Err(Error::Validation("t-SNE settings digest mismatch".into()));
        }

        let labels = LabelStore::from_history(file.label_history);
        let state = SessionState {
            dataset: Arc::new(dataset),
            manifest_path: Some(stored),
            embedding: None,
            round: file.round,
            budget_seconds: file.budget_seconds,
            tsne: file.tsne,
            labels,
            toa_log: file.toa_log,
            palette: file.palette,
            batches: file.batches,
        };
        let mut state = state;
        if let Some(view) = file.embedding {
            state.set_embedding(view)?;
        }

        let mut labeled: Vec<ClipId> = state
            .dataset
            .clips()
            .iter()
            .filter(|c| state.labels.is_labeled(&c.clip_id))
            .map(|c| c.clip_id.clone())
            .collect();
        labeled.sort();
        if labeled != file.pools.labeled || file.pools.labeled.len() + file.pools.unlabeled.len() != state.dataset.len()
        {
            return Err(Error::Validation("pool membership disagrees with label history".into()));
        }
        Ok(state)
    }
}
