//! Label history, temporal segments and the label export file.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::model::{ClipId, Dataset};

/// Reserved class denoting membership of the unlabeled pool. Never exported.
pub const UNLABELED: &str = "__unlabeled__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub clip_id: ClipId,
    pub class_name: String,
    pub round: u32,
    /// Milliseconds since the Unix epoch.
    pub assigned_at: u64,
}

/// Append-only label history with a current-label pointer per clip.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelStore {
    history: Vec<LabelAssignment>,
    current: HashMap<ClipId, usize>,
}

impl LabelStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a store by replaying a history in order.
    pub fn from_history(history: Vec<LabelAssignment>) -> Self {
        let mut store = LabelStore::new();
        for entry in history {
            store.push(entry);
        }
        store
    }

    /// Records an assignment; it supersedes any earlier one for the same clip.
    pub fn push(&mut self, assignment: LabelAssignment) {
        self.current.insert(assignment.clip_id.clone(), self.history.len());
        self.history.push(assignment);
    }

    pub fn current(&self, clip: &ClipId) -> Option<&LabelAssignment> {
        self.current.get(clip).map(|&i| &self.history[i])
    }

    pub fn current_class(&self, clip: &ClipId) -> Option<&str> {
        self.current(clip).map(|a| a.class_name.as_str())
    }

    pub fn is_labeled(&self, clip: &ClipId) -> bool {
        self.current.contains_key(clip)
    }

    pub fn history(&self) -> &[LabelAssignment] {
        &self.history
    }

    pub fn history_for<'a>(&'a self, clip: &'a ClipId) -> impl Iterator<Item = &'a LabelAssignment> {
        self.history.iter().filter(move |a| &a.clip_id == clip)
    }

    /// Number of clips with a current label.
    pub fn labeled_count(&self) -> usize {
        self.current.len()
    }

    /// Current assignments, ordered by clip id.
    pub fn current_assignments(&self) -> Vec<&LabelAssignment> {
        let mut out: Vec<_> = self.current.values().map(|&i| &self.history[i]).collect();
        out.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalSegment {
    pub video_id: String,
    pub class_name: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// Merges maximal runs of consecutive clips sharing a class into segments.
/// Unlabeled clips break runs and produce nothing.
pub fn export_segments(dataset: &Dataset, video_id: &str, labels: &LabelStore) -> Result<Vec<TemporalSegment>> {
    let video = dataset
        .videos
        .get(video_id)
        .ok_or_else(|| Error::NotFound(format!("video {video_id}")))?;
    let mut segments: Vec<TemporalSegment> = Vec::new();
    let mut open: Option<(u32, &str)> = None;

    for clip in dataset.video_clips(video_id) {
        let class = labels.current_class(&clip.clip_id);
        let (start_s, end_s) = clip.span_seconds(video.fps);
        match (class, open) {
            (Some(class), Some((last_index, open_class)))
                if open_class == class && last_index + 1 == clip.clip_index() =>
            {
                segments.last_mut().expect("open segment").end_s = end_s;
                open = Some((clip.clip_index(), open_class));
            }
            (Some(class), _) => {
                segments.push(TemporalSegment {
                    video_id: video_id.to_string(),
                    class_name: class.to_string(),
                    start_s,
                    end_s,
                });
                open = Some((clip.clip_index(), class));
            }
            (None, _) => open = None,
        }
    }
    Ok(segments)
}

/// Seconds written with six fractional digits.
#[derive(Debug, Clone, Copy)]
struct FixedSeconds(f64);

impl Serialize for FixedSeconds {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = RawValue::from_string(format!("{:.6}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

#[derive(Serialize)]
struct ExportEntryOut<'a> {
    label: &'a str,
    segment: [FixedSeconds; 2],
}

#[derive(Serialize)]
struct LabelExportOut<'a> {
    version: u32,
    videos: BTreeMap<&'a str, Vec<ExportEntryOut<'a>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportEntry {
    pub label: String,
    pub segment: [f64; 2],
}

/// Parsed label export document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelExport {
    pub version: u32,
    pub videos: BTreeMap<String, Vec<ExportEntry>>,
}

pub const EXPORT_VERSION: u32 = 1;

/// Segments for every video of the dataset, keyed by video id.
pub fn export_all(dataset: &Dataset, labels: &LabelStore) -> Result<BTreeMap<String, Vec<TemporalSegment>>> {
    dataset
        .videos
        .keys()
        .map(|id| Ok((id.clone(), export_segments(dataset, id, labels)?)))
        .collect()
}

/// Renders the export document with fixed six-digit second values.
pub fn export_json(segments: &BTreeMap<String, Vec<TemporalSegment>>) -> Result<String> {
    let doc = LabelExportOut {
        version: EXPORT_VERSION,
        videos: segments
            .iter()
            .map(|(id, segs)| {
                let entries = segs
                    .iter()
                    .map(|s| ExportEntryOut {
                        label: &s.class_name,
                        segment: [FixedSeconds(s.start_s), FixedSeconds(s.end_s)],
                    })
                    .collect();
                (id.as_str(), entries)
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn parse_export(text: &str) -> Result<LabelExport> {
    let doc: LabelExport = serde_json::from_str(text)?;
    if doc.version != EXPORT_VERSION {
        return Err(Error::Format(format!("unsupported export version {}", doc.version)));
    }
    Ok(doc)
}

/// Recovers per-clip classes from exported segments: each clip takes the
/// class of the segment covering its midpoint second.
pub fn labels_from_export(dataset: &Dataset, export: &LabelExport) -> Vec<(ClipId, String)> {
    let mut out = Vec::new();
    for clip in dataset.clips() {
        let (Some(video), Some(entries)) = (dataset.videos.get(clip.video_id()), export.videos.get(clip.video_id()))
        else {
            continue;
        };
        let (start, end) = clip.span_seconds(video.fps);
        let mid = 0.5 * (start + end);
        if let Some(entry) = entries.iter().find(|e| e.segment[0] <= mid && mid < e.segment[1]) {
            out.push((clip.clip_id.clone(), entry.label.clone()));
        }
    }
    out
}
