//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Row-major `n x dim` matrix of standard normal values.
pub fn normal_matrix(n: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `n` points spread as a 2D Gaussian with the given scale.
pub fn points(n: usize, scale: f64, seed: u64) -> Vec<[f64; 2]> {
    normal_matrix(n, 2, seed)
        .chunks(2)
        .map(|c| [scale * c[0], scale * c[1]])
        .collect()
}

/// Star-shaped polygon with `vertices` corners around the origin.
pub fn star_polygon(vertices: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..vertices)
        .map(|i| {
            let angle = std::f64::consts::TAU * i as f64 / vertices as f64;
            let radius = rng.random_range(2.0..6.0);
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect()
}
