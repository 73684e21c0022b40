//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(n: usize, dim: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            scale * z
        })
        .collect()
}

/// `clusters` isotropic Gaussian blobs of unit std in `dim` dimensions whose
/// centers are pairwise `separation` apart (scaled axis vectors).
pub fn gaussian_clusters(
    clusters: usize,
    per_cluster: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> (Vec<f64>, Vec<usize>) {
    assert!(clusters <= dim);
    let mut r = rng(seed);
    let offset = separation / std::f64::consts::SQRT_2;
    let mut x = Vec::with_capacity(clusters * per_cluster * dim);
    let mut labels = Vec::new();
    for c in 0..clusters {
        for _ in 0..per_cluster {
            for d in 0..dim {
                let z: f64 = StandardNormal.sample(&mut r);
                x.push(z + if d == c { offset } else { 0.0 });
            }
            labels.push(c);
        }
    }
    (x, labels)
}

pub fn points2(v: &[f64]) -> Vec<[f64; 2]> {
    v.chunks(2).map(|c| [c[0], c[1]]).collect()
}

/// Leave-one-out KNN by full sort; tie among classes goes to the class seen first.
pub fn knn_oracle<L: PartialEq + Copy>(points: &[[f64; 2]], labels: &[L], k: usize) -> f64 {
    let n = points.len();
    let mut hits = 0;
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]), j))
            .collect();
        others.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let votes: Vec<L> = others[..k.min(n - 1)].iter().map(|&(_, j)| labels[j]).collect();
        let count = |l: L| votes.iter().filter(|&&v| v == l).count();
        let top = votes.iter().map(|&l| count(l)).max().unwrap();
        let predicted = *votes.iter().find(|&&l| count(l) == top).unwrap();
        if predicted == labels[i] {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    };
    (p[0] - (a[0] + t * ab[0])).hypot(p[1] - (a[1] + t * ab[1]))
}

pub fn boundary_distance(poly: &[[f64; 2]], p: [f64; 2]) -> f64 {
    (0..poly.len())
        .map(|i| segment_distance(p, poly[i], poly[(i + 1) % poly.len()]))
        .fold(f64::INFINITY, f64::min)
}

/// Even-odd test by casting a ray in direction `angle` and counting proper
/// crossings with a parametric solve. Returns `None` if the ray grazes a vertex.
pub fn ray_cast(poly: &[[f64; 2]], p: [f64; 2], angle: f64) -> Option<bool> {
    let dir = [angle.cos(), angle.sin()];
    let mut crossings = 0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let e = [b[0] - a[0], b[1] - a[1]];
        let denom = dir[0] * e[1] - dir[1] * e[0];
        if denom.abs() < 1e-15 {
            continue;
        }
        let w = [a[0] - p[0], a[1] - p[1]];
        let t = (w[0] * e[1] - w[1] * e[0]) / denom;
        let s = (w[0] * dir[1] - w[1] * dir[0]) / denom;
        if t <= 0.0 {
            continue;
        }
        if s.abs() < 1e-12 || (s - 1.0).abs() < 1e-12 {
            return None;
        }
        if (0.0..1.0).contains(&s) {
            crossings += 1;
        }
    }
    Some(crossings % 2 == 1)
}

pub fn ray_cast_robust(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    [0.371_904_2, 1.234_567_891, 2.645_751_3, 4.1]
        .iter()
        .find_map(|&a| ray_cast(poly, p, a))
        .expect("every ray grazed a vertex")
}

pub fn random_polygon(r: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = r.random_range(3..12);
    let cx: f64 = r.random_range(-5.0..5.0);
    let cy: f64 = r.random_range(-5.0..5.0);
    if r.random_bool(0.5) {
        // Star-shaped, simple.
        let mut angles: Vec<f64> = (0..n).map(|_| r.random_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        angles
            .into_iter()
            .map(|a| {
                let rad = r.random_range(0.5..5.0);
                [cx + rad * a.cos(), cy + rad * a.sin()]
            })
            .collect()
    } else {
        // Arbitrary vertex order, usually self-intersecting.
        (0..n)
            .map(|_| [cx + r.random_range(-5.0..5.0), cy + r.random_range(-5.0..5.0)])
            .collect()
    }
}

/// Row labels for `n` clips drawn from a few classes with unlabeled gaps.
pub fn random_labeling(r: &mut ChaCha8Rng, n: usize) -> Vec<Option<&'static str>> {
    (0..n)
        .map(|_| match r.random_range(0..5) {
            0 => None,
            1 | 2 => Some("run"),
            3 => Some("swim"),
            _ => Some("jump"),
        })
        .collect()
}
