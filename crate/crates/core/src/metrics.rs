//! Projection-quality measures: leave-one-out KNN agreement, k-means
//! homogeneity/completeness, and the time-gain ratio.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_KNN_K: usize = 4;
pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITERS: usize = 300;
pub const KMEANS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub knn_k: usize,
    pub knn_accuracy: Option<f64>,
    pub kmeans_k: usize,
    pub homogeneity: Option<f64>,
    pub completeness: Option<f64>,
    pub time_gain: Option<u64>,
    pub per_class_counts: BTreeMap<String, usize>,
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Leave-one-out k-nearest-neighbor accuracy.
///
/// Each point is predicted by majority vote of its `k` nearest other points
/// (ties in distance broken by index). When several classes tie on votes the
/// one whose first vote comes from the nearest neighbor wins. `k` is clamped
/// to `n - 1`.
pub fn knn_accuracy<L: Eq + Hash>(points: &[[f64; 2]], labels: &[L], k: usize) -> Result<f64> {
    let n = points.len();
    if labels.len() != n {
        return Err(Error::Param(format!("{n} points but {} labels", labels.len())));
    }
    if n < 2 {
        return Err(Error::Param("knn accuracy needs at least two points".into()));
    }
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    let k = k.min(n - 1);
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut correct = 0usize;
    for i in 0..n {
        candidates.clear();
        candidates.extend((0..n).filter(|&j| j != i).map(|j| (dist2(points[i], points[j]), j)));
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < candidates.len() {
            candidates.select_nth_unstable_by(k - 1, order);
        }
        let nearest = &mut candidates[..k];
        nearest.sort_unstable_by(order);

        // (votes, rank of first vote) per class
        let mut tally: HashMap<&L, (usize, usize)> = HashMap::new();
        for (rank, &(_, j)) in nearest.iter().enumerate() {
            tally.entry(&labels[j]).or_insert((0, rank)).0 += 1;
        }
        let predicted = tally
            .into_iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .map(|(label, _)| label)
            .expect("k >= 1");
        if *predicted == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

fn plus_plus_seeds(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centers = vec![points[first]];
    let mut nearest: Vec<f64> = points.iter().map(|&p| dist2(p, points[first])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // Remaining points all coincide with centers; take an unused one.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centers.push(points[pick]);
        for (d, &p) in nearest.iter_mut().zip(points) {
            *d = d.min(dist2(p, points[pick]));
        }
    }
    centers
}

fn assign(points: &[[f64; 2]], centers: &[[f64; 2]], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (slot, &p) in out.iter_mut().zip(points) {
        let (best, d) = centers
            .iter()
            .enumerate()
            .map(|(c, &center)| (c, dist2(p, center)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("k >= 1");
        *slot = best;
        inertia += d;
    }
    inertia
}

fn lloyd(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let mut centers = plus_plus_seeds(points, k, rng);
    let mut assignment = vec![0usize; points.len()];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        history.push(assign(points, &centers, &mut assignment));

        let mut sums = vec![[0.0; 2]; k];
        let mut counts = vec![0usize; k];
        for (&c, p) in assignment.iter().zip(points) {
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            counts[c] += 1;
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let next = if counts[c] > 0 {
                [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64]
            } else {
                // Empty cluster: move it onto the point worst served by its center.
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        dist2(points[a], centers[assignment[a]]).total_cmp(&dist2(points[b], centers[assignment[b]]))
                    })
                    .expect("non-empty");
                assignment[far] = c;
                points[far]
            };
            shift = shift.max(dist2(next, centers[c]).sqrt());
            centers[c] = next;
        }
        if shift < KMEANS_TOLERANCE {
            break;
        }
    }
    let inertia = assign(points, &centers, &mut assignment);
    history.push(inertia);
    KMeansResult {
        assignment,
        centroids: centers,
        inertia,
        inertia_history: history,
    }
}

/// k-means++ seeding plus Lloyd iterations; the best of ten seeded restarts.
pub fn kmeans(points: &[[f64; 2]], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    if k > points.len() {
        return Err(Error::Param(format!("k = {k} exceeds the {} points", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..KMEANS_RESTARTS {
        let mut run_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let run = lloyd(points, k, &mut run_rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn entropy(counts: impl Iterator<Item = usize>, total: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity and completeness of a clustering against class labels,
/// using natural-log entropies.
pub fn homogeneity_completeness<K, C>(clusters: &[K], classes: &[C]) -> Result<(f64, f64)>
where
    K: Eq + Hash,
    C: Eq + Hash,
{
    if clusters.len() != classes.len() {
        return Err(Error::Param(format!(
            "{} cluster ids but {} class labels",
            clusters.len(),
            classes.len()
        )));
    }
    if clusters.is_empty() {
        return Err(Error::Param("homogeneity needs at least one sample".into()));
    }
    let total = clusters.len() as f64;
    let mut joint: HashMap<(&K, &C), usize> = HashMap::new();
    let mut by_cluster: HashMap<&K, usize> = HashMap::new();
    let mut by_class: HashMap<&C, usize> = HashMap::new();
    for (k, c) in clusters.iter().zip(classes) {
        *joint.entry((k, c)).or_default() += 1;
        *by_cluster.entry(k).or_default() += 1;
        *by_class.entry(c).or_default() += 1;
    }
    let h_class = entropy(by_class.values().copied(), total);
    let h_cluster = entropy(by_cluster.values().copied(), total);
    let mut h_class_given_cluster = 0.0;
    let mut h_cluster_given_class = 0.0;
    for (&(k, c), &n) in &joint {
        let p = n as f64 / total;
        h_class_given_cluster -= p * (n as f64 / by_cluster[k] as f64).ln();
        h_cluster_given_class -= p * (n as f64 / by_class[c] as f64).ln();
    }
    let h = if h_class == 0.0 {
        1.0
    } else {
        1.0 - h_class_given_cluster / h_class
    };
    let c = if h_cluster == 0.0 {
        1.0
    } else {
        1.0 - h_cluster_given_class / h_cluster
    };
    Ok((h.clamp(0.0, 1.0), c.clamp(0.0, 1.0)))
}

/// Whole-number ratio of video duration to annotation time.
pub fn time_gain(video_minutes: f64, annotation_minutes: f64) -> Result<u64> {
    if annotation_minutes.is_nan() || annotation_minutes <= 0.0 {
        return Err(Error::Param(format!(
            "annotation time must be positive, got {annotation_minutes}"
        )));
    }
    if video_minutes.is_nan() || video_minutes < 0.0 {
        return Err(Error::Param(format!(
            "video time must be non-negative, got {video_minutes}"
        )));
    }
    Ok((video_minutes / annotation_minutes).floor() as u64)
}
