//! Embedding function used for nearest-neighbor distances, and the lookahead
//! embedding that scores a candidate by the mean embedding of its variations.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{PeError, Result};
use crate::genapi::{Degree, GenerationApi};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Identity,
    RandomProjection { dim: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    Identity { dim: usize },
    /// Fixed projection with orthonormal rows (`output_dim × input_dim`).
    RandomProjection {
        input_dim: usize,
        rows: Vec<Vec<f64>>,
    },
}

impl Embedder {
    pub fn identity(dim: usize) -> Self {
        Embedder::Identity { dim }
    }

    /// Gaussian matrix orthonormalized row by row (modified Gram-Schmidt).
    pub fn random_projection(input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if output_dim == 0 || output_dim > input_dim {
            return Err(PeError::InvalidArgument(format!(
                "projection dimension must be in 1..={input_dim}, got {output_dim}"
            )));
        }
        let mut rng = rng::stream(seed, &[]);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(output_dim);
        while rows.len() < output_dim {
            let mut v: Vec<f64> = (0..input_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            for r in &rows {
                let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            rows.push(v);
        }
        Ok(Embedder::RandomProjection { input_dim, rows })
    }

    pub fn from_spec(spec: &EmbedderSpec, input_dim: usize) -> Result<Self> {
        match *spec {
            EmbedderSpec::Identity => Ok(Self::identity(input_dim)),
            EmbedderSpec::RandomProjection { dim, seed } => {
                Self::random_projection(input_dim, dim, seed)
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Embedder::Identity { dim } => *dim,
            Embedder::RandomProjection { input_dim, .. } => *input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Embedder::Identity { dim } => *dim,
            Embedder::RandomProjection { rows, .. } => rows.len(),
        }
    }

    pub fn embed_coords(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(PeError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
                row: None,
            });
        }
        Ok(match self {
            Embedder::Identity { .. } => x.to_vec(),
            Embedder::RandomProjection { rows, .. } => rows
                .iter()
                .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
        })
    }

    pub fn embed(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.embed_coords(&sample.coords)
    }

    pub fn embed_all<'a, I>(&self, samples: I) -> Result<Vec<Vec<f64>>>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        samples.into_iter().map(|s| self.embed(s)).collect()
    }
}

fn mean_of(embeddings: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for e in embeddings {
        acc.iter_mut().zip(e).for_each(|(a, v)| *a += v);
    }
    let k = embeddings.len() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    acc
}

/// Mean embedding of `k` variations of `z`; `k = 0` is plain `embed(z)`.
/// The variations are discarded afterwards.
pub fn lookahead_embedding(
    z: &Sample,
    k: usize,
    api: &dyn GenerationApi,
    degree: &Degree,
    embedder: &Embedder,
    seed: u64,
) -> Result<Vec<f64>> {
    if k == 0 {
        return embedder.embed(z);
    }
    let variations = api.variation(std::slice::from_ref(z), degree, k, seed)?;
    let embs = embedder.embed_all(&variations)?;
    Ok(mean_of(&embs, embedder.output_dim()))
}

/// Lookahead embeddings for a whole population with one backend call.
pub fn lookahead_embeddings(
    population: &[Sample],
    k: usize,
    api: &dyn GenerationApi,
    degree: &Degree,
    embedder: &Embedder,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if k == 0 || population.is_empty() {
        return embedder.embed_all(population);
    }
    let variations = api.variation(population, degree, k, seed)?;
    let embs = embedder.embed_all(&variations)?;
    Ok(embs
        .chunks(k)
        .map(|group| mean_of(group, embedder.output_dim()))
        .collect())
}
