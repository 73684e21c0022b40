//! Gradient of KL(P || Q) for a Student-t (one degree of freedom) output kernel.

use super::affinity::AffinityMatrix;
use super::quadtree::QuadTree;
use crate::error::{Error, Result};

fn kernel(a: [f64; 2], b: [f64; 2]) -> (f64, f64, f64) {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (1.0 / (1.0 + dx * dx + dy * dy), dx, dy)
}

/// Dense O(n^2) gradient with explicit normalization of Q.
pub fn exact_gradient(p: &AffinityMatrix, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len();
    let dense = p.to_dense();
    let mut w = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (wij, _, _) = kernel(points[i], points[j]);
                w[i * n + j] = wij;
                z += wij;
            }
        }
    }
    (0..n)
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let wij = w[i * n + j];
                let coef = 4.0 * (dense[i * n + j] - wij / z) * wij;
                g[0] += coef * (points[i][0] - points[j][0]);
                g[1] += coef * (points[i][1] - points[j][1]);
            }
            g
        })
        .collect()
}

/// Dense KL(P || Q) in nats.
pub fn kl_divergence_exact(p: &AffinityMatrix, points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z += kernel(points[i], points[j]).0;
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for (j, pij) in p.row(i) {
            if pij > 0.0 {
                let q = kernel(points[i], points[j]).0 / z;
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// Barnes-Hut gradient together with the normalization it estimated.
#[derive(Debug, Clone)]
pub struct BhGradient {
    pub gradient: Vec<[f64; 2]>,
    /// Estimate of `Z = sum_{i != j} w_ij`.
    pub z: f64,
}

/// Attraction summed exactly over the sparse P, repulsion approximated with a
/// quadtree. `theta = 0` reproduces the exact repulsion.
pub fn bh_gradient(p: &AffinityMatrix, points: &[[f64; 2]], theta: f64) -> Result<BhGradient> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Param(format!("theta {theta} must lie in [0, 1]")));
    }
    Ok(bh_gradient_scaled(p, points, theta, 1.0))
}

pub(crate) fn bh_gradient_scaled(p: &AffinityMatrix, points: &[[f64; 2]], theta: f64, exaggeration: f64) -> BhGradient {
    let n = points.len();
    let tree = QuadTree::build(points);
    let mut repulsive = vec![[0.0; 2]; n];
    let mut z = 0.0;
    for (i, slot) in repulsive.iter_mut().enumerate() {
        let rep = tree.repulsion(points, i, theta);
        *slot = rep.force;
        z += rep.z;
    }
    let gradient = (0..n)
        .map(|i| {
            let mut attract = [0.0; 2];
            for (j, pij) in p.row(i) {
                let (w, dx, dy) = kernel(points[i], points[j]);
                attract[0] += pij * w * dx;
                attract[1] += pij * w * dy;
            }
            [
                4.0 * (exaggeration * attract[0] - repulsive[i][0] / z),
                4.0 * (exaggeration * attract[1] - repulsive[i][1] / z),
            ]
        })
        .collect();
    BhGradient { gradient, z }
}

/// KL(P || Q) in nats given an estimate of the normalization `z`.
pub fn kl_divergence_with_z(p: &AffinityMatrix, points: &[[f64; 2]], z: f64) -> f64 {
    let mut kl = 0.0;
    for i in 0..points.len() {
        for (j, pij) in p.row(i) {
            if pij > 0.0 {
                let q = kernel(points[i], points[j]).0 / z;
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// Barnes-Hut estimate of KL(P || Q).
pub fn kl_divergence_bh(p: &AffinityMatrix, points: &[[f64; 2]], theta: f64) -> f64 {
    let tree = QuadTree::build(points);
    let z: f64 = (0..points.len()).map(|i| tree.repulsion(points, i, theta).z).sum();
    kl_divergence_with_z(p, points, z)
}
