//! The incremental annotation loop: pools, batches, lasso labeling, rounds
//! and time-of-annotation bookkeeping.

mod lasso;
mod persist;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{run_tsne_observed, Embedding, Progress, TsneConfig};
use crate::error::{Error, Result};
use crate::ingest::refresh_features;
use crate::labels::{export_all, export_json, labels_from_export, LabelAssignment, LabelExport, LabelStore, UNLABELED};
use crate::metrics::{homogeneity_completeness, kmeans, knn_accuracy, time_gain, MetricsReport, DEFAULT_KNN_K};
use crate::model::{ClipId, Dataset};

pub use lasso::LassoPolygon;
pub use persist::{SessionFile, SESSION_VERSION};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolStatus {
    Unlabeled,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToaEntry {
    pub round: u32,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub class_name: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub round: u32,
    pub video_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSelection {
    /// Sorted video ids.
    pub video_ids: Vec<String>,
    /// No candidate videos were left.
    pub pool_exhausted: bool,
}

/// An embedding together with the clip ids its rows belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingView {
    pub round: u32,
    pub clip_ids: Vec<ClipId>,
    pub embedding: Embedding,
}

impl EmbeddingView {
    pub fn new(round: u32, dataset: &Dataset, embedding: Embedding) -> Result<Self> {
        if embedding.len() != dataset.len() {
            return Err(Error::Validation(format!(
                "embedding has {} points but the dataset has {} clips",
                embedding.len(),
                dataset.len()
            )));
        }
        Ok(EmbeddingView {
            round,
            clip_ids: dataset.clips().iter().map(|c| c.clip_id.clone()).collect(),
            embedding,
        })
    }

    pub fn point(&self, row: usize) -> [f64; 2] {
        self.embedding.points[row]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: u32,
    pub refreshed: bool,
    /// The current embedding predates the features and should be recomputed.
    pub embedding_stale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCounts {
    pub labeled: usize,
    pub unlabeled: usize,
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Everything an annotation session needs. Cloning is cheap apart from the
/// label history; the dataset and embedding are shared.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub dataset: Arc<Dataset>,
    /// Manifest the current dataset was loaded from.
    pub manifest_path: Option<PathBuf>,
    pub embedding: Option<Arc<EmbeddingView>>,
    pub round: u32,
    pub budget_seconds: Option<f64>,
    pub tsne: TsneConfig,
    labels: LabelStore,
    toa_log: Vec<ToaEntry>,
    palette: Vec<PaletteEntry>,
    batches: Vec<Batch>,
}

impl SessionState {
    pub fn new(dataset: Dataset, manifest_path: Option<PathBuf>) -> Self {
        SessionState {
            dataset: Arc::new(dataset),
            manifest_path,
            embedding: None,
            round: 0,
            budget_seconds: None,
            tsne: TsneConfig::default(),
            labels: LabelStore::new(),
            toa_log: Vec::new(),
            palette: Vec::new(),
            batches: Vec::new(),
        }
    }

    pub fn labels(&self) -> &LabelStore {
        &self.labels
    }

    pub fn toa_log(&self) -> &[ToaEntry] {
        &self.toa_log
    }

    pub fn palette(&self) -> &[PaletteEntry] {
        &self.palette
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn pool_status(&self, clip: &ClipId) -> PoolStatus {
        if self.labels.is_labeled(clip) {
            PoolStatus::Labeled
        } else {
            PoolStatus::Unlabeled
        }
    }

    pub fn pool_counts(&self) -> PoolCounts {
        let labeled = self
            .dataset
            .clips()
            .iter()
            .filter(|c| self.labels.is_labeled(&c.clip_id))
            .count();
        PoolCounts {
            labeled,
            unlabeled: self.dataset.len() - labeled,
        }
    }

    /// Current class of a clip, or the reserved unlabeled class.
    pub fn display_label(&self, clip: &ClipId) -> &str {
        self.labels.current_class(clip).unwrap_or(UNLABELED)
    }

    pub fn color_of(&self, class_name: &str) -> Option<&str> {
        self.palette
            .iter()
            .find(|p| p.class_name == class_name)
            .map(|p| p.color.as_str())
    }

    fn candidate_videos(&self) -> Vec<String> {
        let drawn: BTreeSet<&str> = self
            .batches
            .iter()
            .flat_map(|b| b.video_ids.iter().map(String::as_str))
            .collect();
        let mut pending: BTreeSet<&str> = BTreeSet::new();
        for clip in self.dataset.clips() {
            if !self.labels.is_labeled(&clip.clip_id) && !drawn.contains(clip.video_id()) {
                pending.insert(clip.video_id());
            }
        }
        pending.into_iter().map(str::to_string).collect()
    }

    /// Draws up to `n_videos` whole videos uniformly without replacement from
    /// videos that still have unlabeled clips and were not drawn before. The
    /// draw is recorded as this round's batch.
    pub fn select_unlabeled_batch(&mut self, n_videos: usize, seed: u64) -> BatchSelection {
        let candidates = self.candidate_videos();
        if candidates.is_empty() {
            return BatchSelection {
                video_ids: Vec::new(),
                pool_exhausted: true,
            };
        }
        let take = n_videos.min(candidates.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<String> = rand::seq::index::sample(&mut rng, candidates.len(), take)
            .into_iter()
            .map(|i| candidates[i].clone())
            .collect();
        picked.sort();
        if !picked.is_empty() {
            self.batches.push(Batch {
                round: self.round,
                video_ids: picked.clone(),
            });
        }
        BatchSelection {
            video_ids: picked,
            pool_exhausted: false,
        }
    }

    /// Clips whose embedded point falls inside the polygon, ordered by clip id.
    /// A degenerate polygon selects nothing.
    pub fn lasso_select(&self, polygon: &LassoPolygon, only_unlabeled: bool) -> Result<Vec<ClipId>> {
        let view = self
            .embedding
            .as_ref()
            .ok_or_else(|| Error::NotReady("no embedding for the current round".into()))?;
        if polygon.is_degenerate() {
            log::warn!("lasso polygon has zero area; selecting nothing");
            return Ok(Vec::new());
        }
        let mut out: Vec<ClipId> = view
            .clip_ids
            .iter()
            .enumerate()
            .filter(|(row, _)| polygon.contains(view.point(*row)))
            .map(|(_, id)| id)
            .filter(|id| !(only_unlabeled && self.labels.is_labeled(id)))
            .filter(|id| self.dataset.position(id).is_some())
            .cloned()
            .collect();
        out.sort();
        Ok(out)
    }

    /// Gives every listed clip `class_name` at the current round. Either all
    /// clips are labeled or, on error, none are.
    pub fn assign_label(&mut self, clip_ids: &[ClipId], class_name: &str, assigned_at: u64) -> Result<usize> {
        let class_name = class_name.trim();
        if class_name.is_empty() {
            return Err(Error::Validation("class name must not be empty".into()));
        }
        if class_name == UNLABELED {
            return Err(Error::Validation(format!("{UNLABELED} is reserved")));
        }
        if clip_ids.is_empty() {
            return Ok(0);
        }
        let unknown: Vec<String> = clip_ids
            .iter()
            .filter(|id| self.dataset.position(id).is_none())
            .map(ToString::to_string)
            .collect();
        if !unknown.is_empty() {
            return Err(Error::NotFound(format!("clips {}", unknown.join(", "))));
        }

        if self.color_of(class_name).is_none() {
            let color = PALETTE[self.palette.len() % PALETTE.len()].to_string();
            self.palette.push(PaletteEntry {
                class_name: class_name.to_string(),
                color,
            });
        }
        for id in clip_ids {
            self.labels.push(LabelAssignment {
                clip_id: id.clone(),
                class_name: class_name.to_string(),
                round: self.round,
                assigned_at,
            });
        }
        Ok(clip_ids.len())
    }

    pub fn cumulative_toa(&self) -> f64 {
        self.toa_log.iter().fold(0.0, |acc, e| acc + e.seconds)
    }

    pub fn record_toa(&mut self, seconds: f64) -> Result<f64> {
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(Error::Param(format!("time of annotation must be >= 0, got {seconds}")));
        }
        self.toa_log.push(ToaEntry {
            round: self.round,
            seconds,
        });
        Ok(self.cumulative_toa())
    }

    fn check_budget(&self) -> Result<()> {
        if let Some(budget) = self.budget_seconds {
            let spent = self.cumulative_toa();
            if spent >= budget {
                return Err(Error::BudgetExhausted { spent, budget });
            }
        }
        Ok(())
    }

    /// Starts the next round, optionally refreshing features from a new
    /// manifest. On error the session is unchanged.
    pub fn advance_round(&mut self, new_manifest: Option<&Path>) -> Result<RoundOutcome> {
        self.check_budget()?;
        let refreshed = match new_manifest {
            Some(path) => Some((refresh_features(&self.dataset, path)?, path.to_path_buf())),
            None => None,
        };
        Ok(self.commit_round(refreshed, None))
    }

    /// Applies a finished round: swaps in refreshed features and/or a new
    /// embedding and increments the round.
    pub fn commit_round(
        &mut self,
        refreshed: Option<(Dataset, PathBuf)>,
        embedding: Option<EmbeddingView>,
    ) -> RoundOutcome {
        let did_refresh = refreshed.is_some();
        if let Some((dataset, path)) = refreshed {
            self.dataset = Arc::new(dataset);
            self.manifest_path = Some(path);
        }
        self.round += 1;
        if let Some(view) = embedding {
            self.embedding = Some(Arc::new(view));
        }
        RoundOutcome {
            round: self.round,
            refreshed: did_refresh,
            embedding_stale: self.embedding_stale(),
        }
    }

    /// Pre-flight checks for a round without mutating anything.
    pub fn can_advance(&self) -> Result<()> {
        self.check_budget()
    }

    pub fn embedding_stale(&self) -> bool {
        match &self.embedding {
            None => true,
            Some(view) => {
                view.clip_ids.len() != self.dataset.len()
                    || view.round < self.dataset.round
                    || view
                        .clip_ids
                        .iter()
                        .zip(self.dataset.clips())
                        .any(|(a, b)| a != &b.clip_id)
            }
        }
    }

    /// Embeds the current features with the session's t-SNE settings.
    pub fn compute_embedding<F>(&self, observer: F) -> Result<EmbeddingView>
    where
        F: FnMut(Progress) -> std::ops::ControlFlow<()>,
    {
        compute_embedding(&self.dataset, &self.tsne, observer)
    }

    pub fn set_embedding(&mut self, view: EmbeddingView) -> Result<()> {
        if view.clip_ids.iter().any(|id| self.dataset.position(id).is_none()) {
            return Err(Error::Validation(
                "embedding refers to clips outside the dataset".into(),
            ));
        }
        self.embedding = Some(Arc::new(view));
        Ok(())
    }

    /// Label export document for every video.
    pub fn export_json(&self) -> Result<String> {
        export_json(&export_all(&self.dataset, &self.labels)?)
    }

    /// Applies labels recovered from an export document. Returns how many
    /// clips were labeled.
    pub fn import_labels(&mut self, export: &LabelExport, assigned_at: u64) -> Result<usize> {
        let mut by_class: BTreeMap<String, Vec<ClipId>> = BTreeMap::new();
        for (id, class) in labels_from_export(&self.dataset, export) {
            by_class.entry(class).or_default().push(id);
        }
        let mut staged = self.clone();
        let mut total = 0;
        for (class, ids) in by_class {
            total += staged.assign_label(&ids, &class, assigned_at)?;
        }
        *self = staged;
        Ok(total)
    }

    /// Quality report over the labeled clips of the current embedding.
    /// Fields that cannot be computed are `None`.
    pub fn metrics_report(&self, seed: u64) -> MetricsReport {
        let mut per_class_counts: BTreeMap<String, usize> = BTreeMap::new();
        for a in self.labels.current_assignments() {
            if self.dataset.position(&a.clip_id).is_some() {
                *per_class_counts.entry(a.class_name.clone()).or_default() += 1;
            }
        }

        let mut points = Vec::new();
        let mut classes = Vec::new();
        if let Some(view) = &self.embedding {
            for (row, id) in view.clip_ids.iter().enumerate() {
                if let Some(class) = self.labels.current_class(id) {
                    points.push(view.point(row));
                    classes.push(class);
                }
            }
        }
        let knn = (points.len() >= 2)
            .then(|| knn_accuracy(&points, &classes, DEFAULT_KNN_K).ok())
            .flatten();
        let kmeans_k = classes.iter().collect::<BTreeSet<_>>().len();
        let hc = (kmeans_k >= 1 && points.len() >= kmeans_k)
            .then(|| {
                kmeans(&points, kmeans_k, seed)
                    .and_then(|km| homogeneity_completeness(&km.assignment, &classes))
                    .ok()
            })
            .flatten();
        let toa = self.cumulative_toa();
        let gain = (toa > 0.0)
            .then(|| time_gain(self.dataset.video_minutes(), toa / 60.0).ok())
            .flatten();

        MetricsReport {
            knn_k: DEFAULT_KNN_K,
            knn_accuracy: knn,
            kmeans_k,
            homogeneity: hc.map(|v| v.0),
            completeness: hc.map(|v| v.1),
            time_gain: gain,
            per_class_counts,
        }
    }
}

pub fn compute_embedding<F>(dataset: &Dataset, config: &TsneConfig, observer: F) -> Result<EmbeddingView>
where
    F: FnMut(Progress) -> std::ops::ControlFlow<()>,
{
    let features = dataset.feature_matrix();
    let embedding = run_tsne_observed(&features, dataset.dim(), config, observer)?;
    EmbeddingView::new(dataset.round, dataset, embedding)
}
