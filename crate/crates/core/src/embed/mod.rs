//! Dimensionality reduction of clip features to 2D.

mod affinity;
mod gradient;
mod knn;
mod pca;
mod quadtree;
mod tsne;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use affinity::{
    conditional_affinities, joint_affinities, neighbor_count, sigma_search, AffinityMatrix, Bandwidth,
    ConditionalAffinities,
};
pub use gradient::{
    bh_gradient, exact_gradient, kl_divergence_bh, kl_divergence_exact, kl_divergence_with_z, BhGradient,
};
pub use knn::{knn_distances, Neighbors};
pub use pca::pca2;
pub use quadtree::{QuadTree, Repulsion};
pub use tsne::{run_tsne, run_tsne_observed, Progress, TsneConfig, KL_TRACE_INTERVAL};

/// How an embedding was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum EmbedMethod {
    Tsne(TsneConfig),
    Pca { explained_variance: [f64; 2] },
}

/// 2D coordinates aligned with dataset clip order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub points: Vec<[f64; 2]>,
    /// `(iteration, KL divergence)` samples.
    pub kl_trace: Vec<(usize, f64)>,
    pub config: EmbedMethod,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn final_kl(&self) -> Option<f64> {
        self.kl_trace.last().map(|&(_, kl)| kl)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let emb: Embedding = serde_json::from_str(text)?;
        if emb.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding contains non-finite coordinates".into()));
        }
        Ok(emb)
    }
}
