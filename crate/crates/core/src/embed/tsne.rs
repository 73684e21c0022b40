use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::affinity::{joint_affinities, AffinityMatrix};
use super::gradient::{bh_gradient_scaled, kl_divergence_bh};
use super::{EmbedMethod, Embedding};
use crate::error::{Error, Result};

/// KL divergence is sampled every this many iterations.
pub const KL_TRACE_INTERVAL: usize = 50;
const INIT_STD: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub early_exaggeration: f64,
    pub learning_rate: f64,
    /// Total iterations, including the exaggeration phase.
    pub iterations: usize,
    pub theta: f64,
    pub exaggeration_iters: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            early_exaggeration: 12.0,
            learning_rate: 200.0,
            iterations: 2500,
            theta: 0.5,
            exaggeration_iters: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("perplexity", self.perplexity),
            ("early_exaggeration", self.early_exaggeration),
            ("learning_rate", self.learning_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.perplexity < 1.0 {
            return Err(Error::Param(format!(
                "perplexity must be >= 1, got {}",
                self.perplexity
            )));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Param(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if self.iterations == 0 {
            return Err(Error::Param("iterations must be at least 1".into()));
        }
        for (name, m) in [
            ("momentum_initial", self.momentum_initial),
            ("momentum_final", self.momentum_final),
        ] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Param(format!("{name} must lie in [0, 1), got {m}")));
            }
        }
        Ok(())
    }
}

/// Reported to observers after every iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    /// 1-based iteration just completed.
    pub iteration: usize,
    pub total: usize,
    /// Set on iterations where KL was sampled.
    pub kl: Option<f64>,
}

pub fn run_tsne(features: &[f64], dim: usize, config: &TsneConfig) -> Result<Embedding> {
    run_tsne_observed(features, dim, config, |_| ControlFlow::Continue(()))
}

/// Runs Barnes-Hut t-SNE. The observer may stop the run early, which yields
/// [`Error::Cancelled`].
pub fn run_tsne_observed<F>(features: &[f64], dim: usize, config: &TsneConfig, observer: F) -> Result<Embedding>
where
    F: FnMut(Progress) -> ControlFlow<()>,
{
    config.validate()?;
    let p = joint_affinities(features, dim, config.perplexity)?;
    optimize(&p, config, observer)
}

fn optimize<F>(p: &AffinityMatrix, config: &TsneConfig, mut observer: F) -> Result<Embedding>
where
    F: FnMut(Progress) -> ControlFlow<()>,
{
    let n = p.n();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = Vec::new();

    for it in 0..config.iterations {
        let exaggerating = it < config.exaggeration_iters;
        let exaggeration = if exaggerating { config.early_exaggeration } else { 1.0 };
        let momentum = if exaggerating {
            config.momentum_initial
        } else {
            config.momentum_final
        };

        let grad = bh_gradient_scaled(p, &y, config.theta, exaggeration).gradient;
        for i in 0..n {
            for a in 0..2 {
                let g = grad[i][a];
                if (g > 0.0) != (update[i][a] > 0.0) {
                    gains[i][a] += 0.2;
                } else {
                    gains[i][a] *= 0.8;
                }
                gains[i][a] = gains[i][a].max(MIN_GAIN);
                update[i][a] = momentum * update[i][a] - config.learning_rate * gains[i][a] * g;
                y[i][a] += update[i][a];
            }
        }
        recenter(&mut y);

        let iteration = it + 1;
        if y.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                iteration,
                trace: kl_trace,
            });
        }
        let kl = if iteration % KL_TRACE_INTERVAL == 0 || iteration == config.iterations {
            let kl = kl_divergence_bh(p, &y, config.theta);
            if !kl.is_finite() {
                return Err(Error::Diverged {
                    iteration,
                    trace: kl_trace,
                });
            }
            kl_trace.push((iteration, kl));
            Some(kl)
        } else {
            None
        };
        if observer(Progress {
            iteration,
            total: config.iterations,
            kl,
        })
        .is_break()
        {
            return Err(Error::Cancelled);
        }
    }

    Ok(Embedding {
        points: y,
        kl_trace,
        config: EmbedMethod::Tsne(config.clone()),
    })
}

fn recenter(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mean = y.iter().fold([0.0; 2], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
    let mean = [mean[0] / n, mean[1] / n];
    for p in y {
        p[0] -= mean[0];
        p[1] -= mean[1];
    }
}
