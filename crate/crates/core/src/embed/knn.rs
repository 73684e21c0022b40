use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Fixed-width nearest-neighbor lists, row `i` holding the `k` points closest to `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbors {
    pub k: usize,
    /// `n * k` neighbor indices, row-major.
    pub indices: Vec<usize>,
    /// Squared Euclidean distances aligned with `indices`.
    pub distances: Vec<f64>,
}

impl Neighbors {
    pub fn len(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = i * self.k..(i + 1) * self.k;
        (&self.indices[span.clone()], &self.distances[span])
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Exact k-nearest neighbors by exhaustive scan. Ties are broken by index.
pub fn knn_distances(features: &[f64], dim: usize, k: usize) -> Result<Neighbors> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(Error::Param(format!(
            "feature buffer of {} values is not a multiple of dim {dim}",
            features.len()
        )));
    }
    let n = features.len() / dim;
    if k >= n {
        return Err(Error::Param(format!(
            "k_nn = {k} must be smaller than the number of points ({n})"
        )));
    }
    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let xi = &features[i * dim..(i + 1) * dim];
        scratch.clear();
        scratch.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(xi, &features[j * dim..(j + 1) * dim]), j)),
        );
        if k > 0 && k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, by_distance_then_index);
        }
        let head = &mut scratch[..k];
        head.sort_unstable_by(by_distance_then_index);
        for &(d, j) in head.iter() {
            indices.push(j);
            distances.push(d);
        }
    }
    Ok(Neighbors { k, indices, distances })
}
