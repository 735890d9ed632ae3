//! Counter-based Monte Carlo plumbing.
//!
//! Samples are generated in fixed-size chunks. Chunk `c` of a run seeded with
//! `s` always draws from ChaCha stream `c` of key `s`, and chunk statistics are
//! merged in chunk order, so estimates do not depend on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHUNK: usize = 4096;

/// Smallest sample count accepted by `McConfig`.
pub const MIN_SAMPLES: usize = 10_000;

pub(crate) fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags into a child seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

/// Sample budget and seed for a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Result<Self> {
        if samples < MIN_SAMPLES {
            return Err(Error::InvalidInput(format!(
                "sample count {samples} below the minimum of {MIN_SAMPLES}"
            )));
        }
        Ok(Self { samples, seed })
    }

    /// Same budget, seed replaced by one derived from `tags`.
    pub fn child(&self, tags: &[u64]) -> Self {
        Self { samples: self.samples, seed: derive_seed(self.seed, tags) }
    }
}

/// Scalar estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

#[derive(Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn merge(mut self, other: &Moments) -> Moments {
        let n = self.n + other.n;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * other.n / n;
            self.m2[k] += other.m2[k] + delta * delta * self.n * other.n / n;
        }
        self.n = n;
        self
    }
}

/// Averages `width` per-sample statistics over `n` draws.
///
/// Each draw hands `f` one uniform in `[0, 1)` and `noise_dim` standard
/// normals. Returns means and standard errors of the means.
pub fn average<F>(n: usize, seed: u64, noise_dim: usize, width: usize, f: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c as u64);
            let count = CHUNK.min(n - c * CHUNK);
            let mut z = vec![0.0; noise_dim];
            let mut out = vec![0.0; width];
            let mut m = Moments { n: 0.0, mean: vec![0.0; width], m2: vec![0.0; width] };
            for _ in 0..count {
                let u: f64 = rng.random();
                for zj in z.iter_mut() {
                    *zj = StandardNormal.sample(&mut rng);
                }
                f(u, &z, &mut out);
                m.n += 1.0;
                for (k, &o) in out.iter().enumerate() {
                    let delta = o - m.mean[k];
                    m.mean[k] += delta / m.n;
                    m.m2[k] += delta * (o - m.mean[k]);
                }
            }
            m
        })
        .collect();
    let total = parts
        .iter()
        .skip(1)
        .fold(parts[0].clone(), |acc, p| acc.merge(p));
    let stderr = total
        .m2
        .iter()
        .map(|m2| (m2 / (total.n - 1.0).max(1.0) / total.n).sqrt())
        .collect();
    (total.mean, stderr)
}
