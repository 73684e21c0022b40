//! Input-space similarities: per-point bandwidth calibration and the sparse
//! symmetric joint probability matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::knn::{knn_distances, Neighbors};
use crate::error::{Error, Result};

const PERPLEXITY_TOLERANCE: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 50;
const MAX_EXPANSION_STEPS: usize = 200;
const DUPLICATE_JITTER: f64 = 1e-8;

/// Outcome of calibrating one point's Gaussian bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Bandwidth {
    /// Precision `1 / (2 sigma^2)`.
    pub beta: f64,
    pub sigma: f64,
    /// `2^H` of the calibrated conditional distribution.
    pub perplexity: f64,
    /// Conditional probabilities aligned with the input distances.
    pub probabilities: Vec<f64>,
    /// False when the search hit its step limit and the bandwidth was clamped.
    pub converged: bool,
}

/// Fills `probs` with `exp(-beta (d - d_min))`, normalized, and returns the
/// entropy in bits.
fn conditional_entropy(distances: &[f64], d_min: f64, beta: f64, probs: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for (p, &d) in probs.iter_mut().zip(distances) {
        *p = (-beta * (d - d_min)).exp();
        sum += *p;
    }
    let mut weighted = 0.0;
    for (p, &d) in probs.iter_mut().zip(distances) {
        *p /= sum;
        weighted += *p * (d - d_min);
    }
    // H = ln(sum) + beta * E[d - d_min], in nats.
    let h = (sum.ln() + beta * weighted) / std::f64::consts::LN_2;
    h.max(0.0)
}

/// Finds the bandwidth whose conditional distribution over `distances`
/// (squared Euclidean) has the target perplexity.
///
/// The precision is first doubled or halved until the target is bracketed,
/// then bisected for at most 50 steps. If the target is unreachable the last
/// bandwidth is returned with `converged == false`.
pub fn sigma_search(distances: &[f64], perplexity: f64) -> Result<Bandwidth> {
    if distances.len() < 2 {
        return Err(Error::Param("bandwidth search needs at least two distances".into()));
    }
    if perplexity.is_nan() || perplexity < 1.0 {
        return Err(Error::Param(format!("perplexity {perplexity} must be >= 1")));
    }
    let d_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if d_max <= 0.0 {
        return Err(Error::Degenerate("all neighbor distances are zero".into()));
    }

    let target = perplexity.log2();
    let spread = distances.iter().map(|d| d - d_min).sum::<f64>() / distances.len() as f64;
    let mut beta = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut probs = vec![0.0; distances.len()];
    let (mut expansions, mut bisections) = (0, 0);

    let converged = loop {
        let h = conditional_entropy(distances, d_min, beta, &mut probs);
        if (h.exp2() - perplexity).abs() <= PERPLEXITY_TOLERANCE {
            break true;
        }
        if h > target {
            lo = beta;
        } else {
            hi = beta;
        }
        if lo > 0.0 && hi.is_finite() {
            if bisections == MAX_BISECTION_STEPS {
                break false;
            }
            bisections += 1;
            beta = 0.5 * (lo + hi);
        } else {
            if expansions == MAX_EXPANSION_STEPS {
                break false;
            }
            expansions += 1;
            beta = if hi.is_finite() { beta * 0.5 } else { beta * 2.0 };
        }
    };

    let h = conditional_entropy(distances, d_min, beta, &mut probs);
    Ok(Bandwidth {
        beta,
        sigma: (0.5 / beta).sqrt(),
        perplexity: h.exp2(),
        probabilities: probs,
        converged,
    })
}

/// Row-normalized conditional probabilities over each point's nearest neighbors.
#[derive(Debug, Clone)]
pub struct ConditionalAffinities {
    pub neighbors: Neighbors,
    /// `n * k` values aligned with `neighbors.indices`; each row sums to 1.
    pub probabilities: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub perplexities: Vec<f64>,
}

/// Sparse symmetric joint probabilities in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl AffinityMatrix {
    /// Builds `(C + C^T) / (2n)` from conditional rows.
    pub fn symmetrize(cond: &ConditionalAffinities) -> Self {
        let n = cond.neighbors.len();
        let k = cond.neighbors.k;
        let mut triples: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * n * k);
        for i in 0..n {
            for slot in 0..k {
                let j = cond.neighbors.indices[i * k + slot];
                let p = cond.probabilities[i * k + slot];
                triples.push((i, j, p));
                triples.push((j, i, p));
            }
        }
        triples.sort_unstable_by_key(|a| (a.0, a.1));

        let scale = 1.0 / (2.0 * n as f64);
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triples.len());
        let mut values: Vec<f64> = Vec::with_capacity(triples.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, p) in triples {
            if last == Some((i, j)) {
                *values.last_mut().expect("merged entry") += p * scale;
            } else {
                cols.push(j);
                values.push(p * scale);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        AffinityMatrix {
            n,
            row_ptr,
            cols,
            values,
            sigmas: cond.sigmas.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, p) in self.row(i) {
                dense[i * self.n + j] = p;
            }
        }
        dense
    }

    /// Builds a matrix from dense row-major values, keeping nonzero entries.
    pub fn from_dense(n: usize, dense: &[f64]) -> Self {
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let p = dense[i * n + j];
                if p != 0.0 {
                    cols.push(j);
                    values.push(p);
                }
            }
            row_ptr[i + 1] = cols.len();
        }
        AffinityMatrix {
            n,
            row_ptr,
            cols,
            values,
            sigmas: vec![],
        }
    }
}

/// Number of neighbors kept per point for a given perplexity.
pub fn neighbor_count(perplexity: f64) -> usize {
    (3.0 * perplexity).floor() as usize
}

fn check_size(n: usize, perplexity: f64) -> Result<()> {
    if perplexity.is_nan() || perplexity < 1.0 {
        return Err(Error::Param(format!("perplexity {perplexity} must be >= 1")));
    }
    if (n as f64) <= 3.0 * perplexity {
        return Err(Error::Param(format!(
            "{n} points are too few for perplexity {perplexity}; use a perplexity below {:.2}",
            n as f64 / 3.0
        )));
    }
    Ok(())
}

/// Calibrated conditional rows. Points whose neighbors all coincide with them
/// receive a small deterministic jitter before the search.
pub fn conditional_affinities(features: &[f64], dim: usize, perplexity: f64) -> Result<ConditionalAffinities> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(Error::Param("feature buffer does not match dim".into()));
    }
    let n = features.len() / dim;
    check_size(n, perplexity)?;
    let k = neighbor_count(perplexity).min(n - 1);

    let mut neighbors = knn_distances(features, dim, k)?;
    let collapsed: Vec<usize> = (0..n)
        .filter(|&i| neighbors.row(i).1.iter().all(|&d| d == 0.0))
        .collect();
    if !collapsed.is_empty() {
        log::warn!(
            "{} points coincide with all of their neighbors; adding jitter of magnitude {DUPLICATE_JITTER:e}",
            collapsed.len()
        );
        let mut jittered = features.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(0x6a69_7474_6572);
        for &i in &collapsed {
            for v in &mut jittered[i * dim..(i + 1) * dim] {
                *v += rng.random_range(-DUPLICATE_JITTER..DUPLICATE_JITTER);
            }
        }
        neighbors = knn_distances(&jittered, dim, k)?;
    }

    let mut probabilities = Vec::with_capacity(n * k);
    let mut sigmas = Vec::with_capacity(n);
    let mut perplexities = Vec::with_capacity(n);
    for i in 0..n {
        let band = sigma_search(neighbors.row(i).1, perplexity)?;
        if !band.converged {
            log::debug!("bandwidth for point {i} clamped at perplexity {:.6}", band.perplexity);
        }
        probabilities.extend_from_slice(&band.probabilities);
        sigmas.push(band.sigma);
        perplexities.push(band.perplexity);
    }
    Ok(ConditionalAffinities {
        neighbors,
        probabilities,
        sigmas,
        perplexities,
    })
}

/// Joint probabilities `p_ij = (p_{j|i} + p_{i|j}) / 2n` over the
/// `floor(3 * perplexity)` nearest neighbors of each point.
pub fn joint_affinities(features: &[f64], dim: usize, perplexity: f64) -> Result<AffinityMatrix> {
    let cond = conditional_affinities(features, dim, perplexity)?;
    Ok(AffinityMatrix::symmetrize(&cond))
}
