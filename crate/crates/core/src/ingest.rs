//! Feature manifests and raw `f32le` feature blobs written by an external extractor.
//!
//! A manifest is a JSON document listing clips in blob row order; the blob
//! holds `clips.len() * dim` little-endian `f32` values with no header.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClipId, ClipRecord, Dataset, VideoMeta};

pub const MANIFEST_VERSION: u32 = 1;
pub const DTYPE_F32LE: &str = "f32le";
const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestClip {
    pub video_id: String,
    pub clip_index: u32,
    pub start_frame: u64,
    pub end_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub version: u32,
    pub dim: usize,
    pub dtype: String,
    pub clips: Vec<ManifestClip>,
    /// Relative to the manifest's directory.
    pub blob_path: String,
    #[serde(default)]
    pub round: u32,
    /// Per-video metadata. Videos not listed get `fps` and a frame count
    /// covering their last clip.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub videos: Vec<VideoMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    /// L2-normalize feature rows before embedding.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub normalize: bool,
    /// Optional thumbnail manifest, relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnails: Option<String>,
}

/// Maps clip ids to middle-frame image files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThumbnailManifest(pub BTreeMap<ClipId, String>);

impl ThumbnailManifest {
    /// Loads the map and resolves paths against `base`, checking each file exists.
    pub fn load(path: &Path, base: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: ThumbnailManifest = serde_json::from_str(&text)?;
        let mut resolved = BTreeMap::new();
        for (id, file) in raw.0 {
            let full = base.join(&file);
            if !full.is_file() {
                return Err(Error::Validation(format!(
                    "thumbnail for clip {id} missing: {}",
                    full.display()
                )));
            }
            resolved.insert(id, full.to_string_lossy().into_owned());
        }
        Ok(ThumbnailManifest(resolved))
    }
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn read_manifest(path: &Path) -> Result<FeatureManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: FeatureManifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    if manifest.dtype != DTYPE_F32LE {
        return Err(Error::Format(format!("unsupported dtype {:?}", manifest.dtype)));
    }
    if manifest.dim == 0 {
        return Err(Error::Format("manifest dim must be positive".into()));
    }
    Ok(manifest)
}

pub fn decode_f32le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn encode_f32le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Reads a manifest and its blob into a validated [`Dataset`].
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_dir(manifest_path);
    let blob_path = dir.join(&manifest.blob_path);
    let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;

    let expected = manifest.clips.len() * manifest.dim * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "blob {} has {} bytes, expected {} ({} clips x {} dims x 4)",
            blob_path.display(),
            bytes.len(),
            expected,
            manifest.clips.len(),
            manifest.dim
        )));
    }

    let fps = manifest.fps.unwrap_or(DEFAULT_FPS);
    let mut videos: BTreeMap<String, VideoMeta> = manifest
        .videos
        .iter()
        .map(|v| (v.video_id.clone(), v.clone()))
        .collect();
    for clip in &manifest.clips {
        let video = videos
            .entry(clip.video_id.clone())
            .or_insert_with(|| VideoMeta::new(clip.video_id.clone(), fps, 0));
        if manifest.videos.iter().all(|v| v.video_id != clip.video_id) {
            video.frame_count = video.frame_count.max(clip.end_frame);
        }
    }

    let thumbs = match &manifest.thumbnails {
        Some(rel) => ThumbnailManifest::load(&dir.join(rel), &dir)?,
        None => ThumbnailManifest::default(),
    };

    let clips = manifest
        .clips
        .iter()
        .map(|c| {
            let clip_id = ClipId::new(c.video_id.clone(), c.clip_index);
            ClipRecord {
                thumbnail_ref: thumbs.0.get(&clip_id).cloned(),
                clip_id,
                start_frame: c.start_frame,
                end_frame: c.end_frame,
            }
        })
        .collect();

    let mut dataset = Dataset::new(videos, clips, decode_f32le(&bytes), manifest.dim)?;
    dataset.round = manifest.round;
    dataset.normalize = manifest.normalize;
    Ok(dataset)
}

/// Writes `dataset` as `<dir>/<stem>.json` plus `<dir>/<stem>.f32` and
/// returns the manifest path.
pub fn write_features(dataset: &Dataset, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob_name = format!("{stem}.f32");
    let blob_path = dir.join(&blob_name);
    fs::write(&blob_path, encode_f32le(dataset.raw_features())).map_err(|e| Error::io(&blob_path, e))?;

    let manifest = FeatureManifest {
        version: MANIFEST_VERSION,
        dim: dataset.dim(),
        dtype: DTYPE_F32LE.into(),
        clips: dataset
            .clips()
            .iter()
            .map(|c| ManifestClip {
                video_id: c.video_id().to_string(),
                clip_index: c.clip_index(),
                start_frame: c.start_frame,
                end_frame: c.end_frame,
            })
            .collect(),
        blob_path: blob_name,
        round: dataset.round,
        videos: dataset.videos.values().cloned().collect(),
        fps: None,
        normalize: dataset.normalize,
        thumbnails: None,
    };
    let manifest_path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Loads re-extracted features for a new round. The new manifest must cover
/// every clip of `current` with the same dimension; it may add clips.
pub fn refresh_features(current: &Dataset, new_manifest: &Path) -> Result<Dataset> {
    let mut next = load_dataset(new_manifest)?;
    if next.dim() != current.dim() {
        return Err(Error::Refresh(format!(
            "feature dimension changed from {} to {}",
            current.dim(),
            next.dim()
        )));
    }
    let missing: BTreeSet<String> = current
        .clips()
        .iter()
        .filter(|c| next.position(&c.clip_id).is_none())
        .map(|c| c.clip_id.to_string())
        .collect();
    if !missing.is_empty() {
        let list: Vec<_> = missing.into_iter().collect();
        return Err(Error::Refresh(format!(
            "new manifest is missing clips: {}",
            list.join(", ")
        )));
    }
    // Carry thumbnails forward where the new manifest has none.
    let old_thumbs: Vec<(ClipId, String)> = current
        .clips()
        .iter()
        .filter_map(|c| c.thumbnail_ref.clone().map(|t| (c.clip_id.clone(), t)))
        .collect();
    let lookup: BTreeMap<_, _> = old_thumbs.into_iter().collect();
    for clip in next.clips_mut() {
        if clip.thumbnail_ref.is_none() {
            clip.thumbnail_ref = lookup.get(&clip.clip_id).cloned();
        }
    }
    next.round = current.round + 1;
    Ok(next)
}
