//! Clip-level video annotation through 2D feature maps.
//!
//! Clip features produced by an external extractor are embedded with
//! Barnes-Hut t-SNE; an annotator lassoes groups of nearby points and labels
//! them, round after round, while the projection quality is tracked with
//! KNN and k-means based measures.

pub mod embed;
pub mod error;
pub mod ingest;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod session;

pub use embed::{Embedding, TsneConfig};
pub use error::{Error, ErrorKind, Result};
pub use labels::{LabelAssignment, LabelStore, TemporalSegment, UNLABELED};
pub use metrics::MetricsReport;
pub use model::{ClipId, ClipRecord, Dataset, VideoMeta};
pub use session::{LassoPolygon, SessionState};
