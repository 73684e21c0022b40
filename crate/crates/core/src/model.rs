//! Videos, clips and the feature matrix that ties them together.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub fps: f64,
    pub frame_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_path: Option<String>,
}

impl VideoMeta {
    pub fn new(video_id: impl Into<String>, fps: f64, frame_count: u64) -> Self {
        VideoMeta {
            video_id: video_id.into(),
            fps,
            frame_count,
            source_path: None,
        }
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frame_count as f64 / self.fps
    }
}

/// Identifies a clip by its video and its ordinal within that video.
///
/// Ordering is by video id, then clip index. The textual form is
/// `<video_id>#<clip_index>`; video ids may themselves contain `#`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClipId {
    pub video_id: String,
    pub clip_index: u32,
}

impl ClipId {
    pub fn new(video_id: impl Into<String>, clip_index: u32) -> Self {
        ClipId {
            video_id: video_id.into(),
            clip_index,
        }
    }
}

impl fmt::Display for ClipId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.video_id, self.clip_index)
    }
}

impl FromStr for ClipId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (video, index) = s
            .rsplit_once('#')
            .ok_or_else(|| Error::Validation(format!("malformed clip id {s:?}")))?;
        let clip_index = index
            .parse()
            .map_err(|_| Error::Validation(format!("malformed clip index in {s:?}")))?;
        Ok(ClipId::new(video, clip_index))
    }
}

impl Serialize for ClipId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClipId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One fixed-length window `[start_frame, end_frame)` of a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: ClipId,
    pub start_frame: u64,
    pub end_frame: u64,
    /// Middle-frame image, if one was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_ref: Option<String>,
}

impl ClipRecord {
    pub fn video_id(&self) -> &str {
        &self.clip_id.video_id
    }

    pub fn clip_index(&self) -> u32 {
        self.clip_id.clip_index
    }

    pub fn time_steps(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    /// Seconds covered by the clip, half-open.
    pub fn span_seconds(&self, fps: f64) -> (f64, f64) {
        (self.start_frame as f64 / fps, self.end_frame as f64 / fps)
    }
}

/// Splits a video into consecutive non-overlapping windows of `time_steps`
/// frames. A trailing remainder shorter than one window is dropped.
pub fn make_clips(video: &VideoMeta, time_steps: u64) -> Result<Vec<ClipRecord>> {
    if time_steps == 0 {
        return Err(Error::Param("time_steps must be at least 1".into()));
    }
    let count = video.frame_count / time_steps;
    Ok((0..count)
        .map(|i| ClipRecord {
            clip_id: ClipId::new(video.video_id.clone(), i as u32),
            start_frame: i * time_steps,
            end_frame: (i + 1) * time_steps,
            thumbnail_ref: None,
        })
        .collect())
}

pub fn middle_frame(clip: &ClipRecord) -> u64 {
    clip.start_frame + clip.time_steps() / 2
}

/// A row of the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector<'a>(pub &'a [f32]);

impl FeatureVector<'_> {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}

/// Clips of one or more videos with their row-aligned `k x dim` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub videos: BTreeMap<String, VideoMeta>,
    clips: Vec<ClipRecord>,
    features: Vec<f32>,
    dim: usize,
    /// Feature-extraction round this matrix came from.
    pub round: u32,
    /// L2-normalize rows before embedding.
    pub normalize: bool,
    index: HashMap<ClipId, usize>,
}

impl Dataset {
    /// Builds and validates a dataset. `features` is row-major, one row per clip.
    pub fn new(
        videos: BTreeMap<String, VideoMeta>,
        clips: Vec<ClipRecord>,
        features: Vec<f32>,
        dim: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("feature dimension must be positive".into()));
        }
        if features.len() != clips.len() * dim {
            return Err(Error::Format(format!(
                "feature matrix has {} values, expected {} clips x {} dims",
                features.len(),
                clips.len(),
                dim
            )));
        }
        for video in videos.values() {
            if !(video.fps.is_finite() && video.fps > 0.0) {
                return Err(Error::Validation(format!(
                    "video {} has non-positive fps {}",
                    video.video_id, video.fps
                )));
            }
        }

        let mut index = HashMap::with_capacity(clips.len());
        for (row, clip) in clips.iter().enumerate() {
            if !videos.contains_key(clip.video_id()) {
                return Err(Error::Validation(format!(
                    "clip {} references unknown video",
                    clip.clip_id
                )));
            }
            if clip.end_frame <= clip.start_frame {
                return Err(Error::Validation(format!(
                    "clip {} has empty frame range",
                    clip.clip_id
                )));
            }
            if index.insert(clip.clip_id.clone(), row).is_some() {
                return Err(Error::Validation(format!("duplicate clip id {}", clip.clip_id)));
            }
            if let Some(bad) = features[row * dim..(row + 1) * dim].iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "non-finite feature value in row {row} (clip {}, clip_index {}, column {bad})",
                    clip.clip_id,
                    clip.clip_index()
                )));
            }
        }
        check_contiguity(&clips)?;

        Ok(Dataset {
            videos,
            clips,
            features,
            dim,
            round: 0,
            normalize: false,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clips(&self) -> &[ClipRecord] {
        &self.clips
    }

    pub fn clips_mut(&mut self) -> impl Iterator<Item = &mut ClipRecord> {
        self.clips.iter_mut()
    }

    /// Raw row-major feature values as stored on disk.
    pub fn raw_features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> FeatureVector<'_> {
        FeatureVector(&self.features[i * self.dim..(i + 1) * self.dim])
    }

    pub fn position(&self, id: &ClipId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn clip(&self, id: &ClipId) -> Option<&ClipRecord> {
        self.position(id).map(|i| &self.clips[i])
    }

    /// Clips of one video, ordered by clip index.
    pub fn video_clips(&self, video_id: &str) -> Vec<&ClipRecord> {
        let mut clips: Vec<_> = self.clips.iter().filter(|c| c.video_id() == video_id).collect();
        clips.sort_by_key(|c| c.clip_index());
        clips
    }

    /// Feature matrix widened to f64, L2-normalized per row when requested.
    pub fn feature_matrix(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.features.iter().map(|&v| v as f64).collect();
        if self.normalize {
            for row in out.chunks_mut(self.dim) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|v| *v /= norm);
                }
            }
        }
        out
    }

    /// Total duration of all videos in minutes.
    pub fn video_minutes(&self) -> f64 {
        self.videos.values().map(|v| v.duration_seconds()).sum::<f64>() / 60.0
    }
}

fn check_contiguity(clips: &[ClipRecord]) -> Result<()> {
    let mut by_video: BTreeMap<&str, Vec<&ClipRecord>> = BTreeMap::new();
    for clip in clips {
        by_video.entry(clip.video_id()).or_default().push(clip);
    }
    for (video, mut list) in by_video {
        list.sort_by_key(|c| c.clip_index());
        for pair in list.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b.clip_index() != a.clip_index() + 1 || b.start_frame != a.end_frame {
                return Err(Error::Validation(format!(
                    "clips of video {video} are not contiguous between index {} and {}",
                    a.clip_index(),
                    b.clip_index()
                )));
            }
        }
    }
    Ok(())
}
