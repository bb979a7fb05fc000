//! DP nearest-neighbors histogram.
//!
//! Every private sample votes for its nearest population member (squared ℓ2,
//! lowest index wins ties). Per-bin Gaussian noise with standard deviation σ
//! is then added and the counts are thresholded: `max(noisy − H, 0)`.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Population};
use crate::distance;
use crate::embedding::{lookahead_embeddings, Embedder};
use crate::error::{PeError, Result};
use crate::genapi::{Degree, GenerationApi};
use crate::rng;

/// Private samples handed to each rayon task.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VotingConfig {
    /// Standard deviation of the per-bin Gaussian noise.
    pub sigma: f64,
    /// Threshold `H` subtracted from noisy counts.
    pub threshold: f64,
    #[serde(default)]
    pub lookahead_k: usize,
}

impl VotingConfig {
    pub fn new(sigma: f64, threshold: f64, lookahead_k: usize) -> Result<Self> {
        let cfg = Self {
            sigma,
            threshold,
            lookahead_k,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn non_private() -> Self {
        Self {
            sigma: 0.0,
            threshold: 0.0,
            lookahead_k: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(PeError::InvalidArgument(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(PeError::InvalidArgument(format!(
                "threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteHistogram {
    pub raw: Vec<f64>,
    pub noisy: Vec<f64>,
    pub released: Vec<f64>,
}

impl VoteHistogram {
    /// Adds noise from one substream in bin order, then thresholds.
    pub fn privatize(raw: Vec<f64>, cfg: &VotingConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let noisy: Vec<f64> = if cfg.sigma > 0.0 {
            let normal = Normal::new(0.0, cfg.sigma)
                .map_err(|e| PeError::InvalidArgument(e.to_string()))?;
            let mut rng = rng::stream(seed, &[]);
            raw.iter().map(|r| r + normal.sample(&mut rng)).collect()
        } else {
            raw.clone()
        };
        let released = threshold(&noisy, cfg.threshold);
        Ok(Self {
            raw,
            noisy,
            released,
        })
    }

    pub fn population_size(&self) -> usize {
        self.raw.len()
    }

    pub fn voted_bins(&self) -> impl Iterator<Item = usize> + '_ {
        self.raw.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, _)| i)
    }

    pub fn surviving_bins(&self) -> impl Iterator<Item = usize> + '_ {
        self.released.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, _)| i)
    }

    /// Whether the bins left after thresholding are exactly the voted bins.
    pub fn survivors_match_votes(&self) -> bool {
        self.raw
            .iter()
            .zip(&self.released)
            .all(|(r, s)| (*r > 0.0) == (*s > 0.0))
    }

    pub fn released_total(&self) -> f64 {
        self.released.iter().sum()
    }
}

pub fn threshold(noisy: &[f64], h: f64) -> Vec<f64> {
    noisy.iter().map(|v| (v - h).max(0.0)).collect()
}

fn check_population(population: &[Vec<f64>]) -> Result<usize> {
    let first = population.first().ok_or(PeError::NoSamples)?;
    let dim = first.len();
    if let Some(bad) = population.iter().find(|p| p.len() != dim) {
        return Err(PeError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
            row: None,
        });
    }
    Ok(dim)
}

fn check_voter(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(PeError::DimensionMismatch {
            expected: dim,
            found: x.len(),
            row: None,
        });
    }
    Ok(())
}

/// Raw vote counts, parallel over private samples. Partial histograms are
/// integer counts, so the merge is exact regardless of scheduling.
pub fn nn_histogram(private: &[Vec<f64>], population: &[Vec<f64>]) -> Result<Vec<u64>> {
    nn_histogram_weighted(private, None, population)
}

/// Like [`nn_histogram`], with an optional multiplicity per private point.
pub fn nn_histogram_weighted(
    private: &[Vec<f64>],
    weights: Option<&[u64]>,
    population: &[Vec<f64>],
) -> Result<Vec<u64>> {
    let dim = check_population(population)?;
    if let Some(w) = weights {
        if w.len() != private.len() {
            return Err(PeError::SizeMismatch(format!(
                "{} weights for {} private points",
                w.len(),
                private.len()
            )));
        }
    }
    private.iter().try_for_each(|x| check_voter(x, dim))?;
    let n = population.len();
    let hist = private
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut h = vec![0u64; n];
            for (off, x) in chunk.iter().enumerate() {
                let (j, _) = distance::nearest(x, population).expect("nonempty population");
                h[j] += weights.map_or(1, |w| w[c * CHUNK + off]);
            }
            h
        })
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(hist)
}

/// Single-threaded reference path.
pub fn nn_histogram_serial(private: &[Vec<f64>], population: &[Vec<f64>]) -> Result<Vec<u64>> {
    let dim = check_population(population)?;
    let mut h = vec![0u64; population.len()];
    for x in private {
        check_voter(x, dim)?;
        let (j, _) = distance::nearest(x, population).expect("nonempty population");
        h[j] += 1;
    }
    Ok(h)
}

/// Full DP histogram over a population. Population members are embedded
/// through lookahead with `cfg.lookahead_k` variations at `degree`; private
/// samples use the plain embedding.
#[allow(clippy::too_many_arguments)]
pub fn dp_nn_histogram(
    private: &Dataset,
    population: &Population,
    cfg: &VotingConfig,
    embedder: &Embedder,
    api: &dyn GenerationApi,
    degree: &Degree,
    lookahead_seed: u64,
    noise_seed: u64,
) -> Result<VoteHistogram> {
    if population.is_empty() {
        return Err(PeError::NoSamples);
    }
    let private_emb = embedder.embed_all(&private.samples)?;
    let pop_emb = lookahead_embeddings(
        &population.samples,
        cfg.lookahead_k,
        api,
        degree,
        embedder,
        lookahead_seed,
    )?;
    let raw = nn_histogram(&private_emb, &pop_emb)?;
    VoteHistogram::privatize(raw.into_iter().map(|c| c as f64).collect(), cfg, noise_seed)
}
