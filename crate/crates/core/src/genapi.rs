//! The two blackbox generation calls, `RANDOM_API` and `VARIATION_API`.
//!
//! [`SimulatedBackend`] implements the bounded-ball Gaussian model used by the
//! convergence analysis: initial samples are uniform in a ball of diameter
//! `D`, and a variation at scale `i` adds `N(0, σ_i² I)` noise with
//! `σ_i = D·sqrt(ln L) / (2^i · d)`. [`HttpBackend`] forwards both calls to an
//! external service speaking a small JSON protocol.
//!
//! Randomness is passed as a `u64` seed. Backends derive one substream per
//! source sample, so the output does not depend on how work is scheduled.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BallWorld, Population, Sample};
use crate::error::{PeError, Result};
use crate::rng;

/// How strongly `VARIATION_API` perturbs its input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Degree {
    /// Index `i ≥ 1` into the backend's scale ladder.
    Scale(u32),
    /// Explicit noise standard deviation.
    Sigma(f64),
    /// The zero-noise limit; outputs equal inputs.
    #[serde(with = "identity_tag")]
    Identity,
}

mod identity_tag {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("identity")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "identity" {
            Ok(())
        } else {
            Err(de::Error::custom(format!("unknown degree `{s}`")))
        }
    }
}

impl Degree {
    /// Numeric form used on the wire.
    pub fn as_number(&self) -> f64 {
        match *self {
            Degree::Identity => 0.0,
            Degree::Scale(i) => i as f64,
            Degree::Sigma(s) => s,
        }
    }
}

/// Per-iteration variation degrees.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DegreeSchedule(pub Vec<Degree>);

impl DegreeSchedule {
    pub fn constant(degree: Degree, len: usize) -> Self {
        Self(vec![degree; len])
    }

    /// Degree for 1-based iteration `t`.
    pub fn at(&self, t: usize) -> Option<&Degree> {
        t.checked_sub(1).and_then(|i| self.0.get(i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, iterations: usize) -> Result<()> {
        if self.0.len() < iterations {
            return Err(PeError::InvalidArgument(format!(
                "degree schedule has {} entries but {iterations} iterations were requested",
                self.0.len()
            )));
        }
        for d in &self.0 {
            match *d {
                Degree::Scale(0) => {
                    return Err(PeError::UnknownDegree("scale index 0 (scales start at 1)".into()))
                }
                Degree::Sigma(s) if !(s > 0.0 && s.is_finite()) => {
                    return Err(PeError::InvalidArgument(format!(
                        "degree sigma must be positive, got {s}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Blackbox generation interface.
pub trait GenerationApi: Send + Sync {
    /// Dimension of generated samples.
    fn dim(&self) -> usize;

    fn random(&self, n: usize, condition: Option<&str>, seed: u64) -> Result<Vec<Sample>>;

    /// Returns `count_per_sample` variations of each input, grouped by source
    /// in source order. Labels and conditions are inherited.
    fn variation(
        &self,
        samples: &[Sample],
        degree: &Degree,
        count_per_sample: usize,
        seed: u64,
    ) -> Result<Vec<Sample>>;

    /// `L` draws at each of the `r` scales, scale-major.
    fn multi_scale_variation(&self, _sample: &Sample, _seed: u64) -> Result<Vec<Sample>> {
        Err(PeError::Unsupported("multi-scale variation"))
    }
}

pub fn random_api(
    api: &dyn GenerationApi,
    n: usize,
    condition: Option<&str>,
    seed: u64,
) -> Result<Population> {
    if n == 0 {
        return Err(PeError::InvalidArgument("random_api requires n >= 1".into()));
    }
    Ok(Population::new(api.random(n, condition, seed)?, 0))
}

pub fn variation_api(
    api: &dyn GenerationApi,
    samples: &Population,
    degree: &Degree,
    count_per_sample: usize,
    seed: u64,
) -> Result<Population> {
    if samples.is_empty() {
        return Err(PeError::NoSamples);
    }
    if count_per_sample == 0 {
        return Err(PeError::InvalidArgument("count_per_sample must be >= 1".into()));
    }
    let out = api.variation(&samples.samples, degree, count_per_sample, seed)?;
    Ok(Population::new(out, samples.generation + 1))
}

pub fn multi_scale_variation(
    api: &dyn GenerationApi,
    sample: &Sample,
    seed: u64,
) -> Result<Population> {
    Ok(Population::new(api.multi_scale_variation(sample, seed)?, 0))
}

/// Base of the logarithm in the scale formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedBackendConfig {
    pub world: BallWorld,
    /// Variations drawn per scale (`L`).
    pub variations_per_scale: usize,
    /// Target resolution η.
    pub eta: f64,
    /// Project variations back into the ball.
    pub clip: bool,
    #[serde(default)]
    pub log_base: LogBase,
}

impl SimulatedBackendConfig {
    pub fn new(world: BallWorld, variations_per_scale: usize, eta: f64, clip: bool) -> Result<Self> {
        let cfg = Self {
            world,
            variations_per_scale,
            eta,
            clip,
            log_base: LogBase::Natural,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variations_per_scale == 0 {
            return Err(PeError::InvalidArgument("variations per scale L must be >= 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(PeError::InvalidArgument(format!("eta must be > 0, got {}", self.eta)));
        }
        Ok(())
    }

    /// Number of scales, `r = ⌈log2(D/η)⌉`.
    pub fn scales(&self) -> u32 {
        num_scales(self.world.diameter, self.eta)
    }

    /// `σ_i = D·sqrt(log L) / (2^i · d)`.
    pub fn sigma_at(&self, i: u32) -> f64 {
        let l = self.variations_per_scale as f64;
        let log_l = match self.log_base {
            LogBase::Natural => l.ln(),
            LogBase::Two => l.log2(),
        };
        scale_sigma(self.world.diameter, log_l, i, self.world.dim())
    }
}

/// `⌈log2(D/η)⌉`, at least 1.
pub fn num_scales(diameter: f64, eta: f64) -> u32 {
    let r = (diameter / eta).log2();
    // Guard against 2.9999999 style rounding for exact powers of two.
    let rounded = r.round();
    let r = if (r - rounded).abs() < 1e-9 { rounded } else { r.ceil() };
    (r as u32).max(1)
}

pub fn scale_sigma(diameter: f64, log_l: f64, i: u32, dim: usize) -> f64 {
    diameter * log_l.sqrt() / (2f64.powi(i as i32) * dim as f64)
}

/// In-process backend implementing the bounded-ball Gaussian model.
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    config: SimulatedBackendConfig,
}

impl SimulatedBackend {
    pub fn new(config: SimulatedBackendConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &SimulatedBackendConfig {
        &self.config
    }

    pub fn sigma_for(&self, degree: &Degree) -> Result<f64> {
        match *degree {
            Degree::Identity => Ok(0.0),
            Degree::Sigma(s) if s >= 0.0 && s.is_finite() => Ok(s),
            Degree::Sigma(s) => Err(PeError::UnknownDegree(format!("sigma {s}"))),
            Degree::Scale(i) if (1..=self.config.scales()).contains(&i) => {
                Ok(self.config.sigma_at(i))
            }
            Degree::Scale(i) => Err(PeError::UnknownDegree(format!(
                "scale index {i} outside 1..={}",
                self.config.scales()
            ))),
        }
    }

    fn perturb<R: Rng>(&self, source: &Sample, sigma: f64, rng: &mut R) -> Sample {
        let mut coords = source.coords.clone();
        if sigma > 0.0 {
            for c in coords.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *c += sigma * z;
            }
            if self.config.clip {
                self.config.world.project(&mut coords);
            }
        }
        Sample {
            coords,
            label: source.label.clone(),
            condition: source.condition.clone(),
        }
    }

    fn check_dim(&self, s: &Sample) -> Result<()> {
        if s.dim() != self.dim() {
            return Err(PeError::DimensionMismatch {
                expected: self.dim(),
                found: s.dim(),
                row: None,
            });
        }
        Ok(())
    }
}

/// Uniform draw from the ball: Gaussian direction, radius `R·U^(1/m)`.
fn uniform_in_ball<R: Rng>(ball: &BallWorld, rng: &mut R) -> Vec<f64> {
    let m = ball.dim();
    loop {
        let dir: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.gen();
        let radius = ball.radius() * u.powf(1.0 / m as f64);
        return dir
            .iter()
            .zip(&ball.center)
            .map(|(d, c)| c + d / norm * radius)
            .collect();
    }
}

impl GenerationApi for SimulatedBackend {
    fn dim(&self) -> usize {
        self.config.world.dim()
    }

    fn random(&self, n: usize, condition: Option<&str>, seed: u64) -> Result<Vec<Sample>> {
        if n == 0 {
            return Err(PeError::InvalidArgument("random_api requires n >= 1".into()));
        }
        let condition = condition.map(str::to_string);
        Ok((0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream(seed, &[i as u64]);
                Sample::new(uniform_in_ball(&self.config.world, &mut rng))
                    .with_condition(condition.clone())
            })
            .collect())
    }

    fn variation(
        &self,
        samples: &[Sample],
        degree: &Degree,
        count_per_sample: usize,
        seed: u64,
    ) -> Result<Vec<Sample>> {
        if samples.is_empty() {
            return Err(PeError::NoSamples);
        }
        let sigma = self.sigma_for(degree)?;
        samples.iter().try_for_each(|s| self.check_dim(s))?;
        let groups: Vec<Vec<Sample>> = samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = rng::stream(seed, &[i as u64]);
                (0..count_per_sample)
                    .map(|_| self.perturb(s, sigma, &mut rng))
                    .collect()
            })
            .collect();
        Ok(groups.into_iter().flatten().collect())
    }

    fn multi_scale_variation(&self, sample: &Sample, seed: u64) -> Result<Vec<Sample>> {
        self.check_dim(sample)?;
        let l = self.config.variations_per_scale;
        let mut out = Vec::with_capacity(l * self.config.scales() as usize);
        for i in 1..=self.config.scales() {
            let sigma = self.config.sigma_at(i);
            let mut rng = rng::stream(seed, &[i as u64]);
            out.extend((0..l).map(|_| self.perturb(sample, sigma, &mut rng)));
        }
        Ok(out)
    }
}

#[derive(Debug, Serialize)]
struct RandomRequest<'a> {
    n: usize,
    dim: usize,
    condition: Option<&'a str>,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct VariationRequest<'a> {
    samples: Vec<&'a [f64]>,
    degree: f64,
    count_per_sample: usize,
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct SamplesResponse {
    samples: Vec<Vec<f64>>,
}

/// Adapter for an external generation service. No retries: a failed call
/// aborts the run.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    endpoint: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| PeError::Backend(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            dim,
            client,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn post<B: Serialize>(&self, route: &str, body: &B) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/{route}", self.endpoint);
        let resp = self
            .client
            .post(&url)
            .json(body)
            .send()
            .map_err(|e| PeError::Backend(format!("POST {url}: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(PeError::Backend(format!("POST {url}: HTTP {status}")));
        }
        let parsed: SamplesResponse = resp
            .json()
            .map_err(|e| PeError::Backend(format!("POST {url}: bad response body: {e}")))?;
        for row in &parsed.samples {
            if row.len() != self.dim {
                return Err(PeError::DimensionMismatch {
                    expected: self.dim,
                    found: row.len(),
                    row: None,
                });
            }
        }
        Ok(parsed.samples)
    }
}

impl GenerationApi for HttpBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn random(&self, n: usize, condition: Option<&str>, seed: u64) -> Result<Vec<Sample>> {
        let rows = self.post(
            "random",
            &RandomRequest {
                n,
                dim: self.dim,
                condition,
                seed,
            },
        )?;
        if rows.len() != n {
            return Err(PeError::Backend(format!(
                "random returned {} samples, expected {n}",
                rows.len()
            )));
        }
        Ok(rows
            .into_iter()
            .map(|c| Sample::new(c).with_condition(condition.map(str::to_string)))
            .collect())
    }

    fn variation(
        &self,
        samples: &[Sample],
        degree: &Degree,
        count_per_sample: usize,
        seed: u64,
    ) -> Result<Vec<Sample>> {
        let rows = self.post(
            "variation",
            &VariationRequest {
                samples: samples.iter().map(|s| s.coords.as_slice()).collect(),
                degree: degree.as_number(),
                count_per_sample,
                seed,
            },
        )?;
        let expected = samples.len() * count_per_sample;
        if rows.len() != expected {
            return Err(PeError::Backend(format!(
                "variation returned {} samples, expected {expected}",
                rows.len()
            )));
        }
        Ok(rows
            .into_iter()
            .enumerate()
            .map(|(k, coords)| {
                let src = &samples[k / count_per_sample];
                Sample {
                    coords,
                    label: src.label.clone(),
                    condition: src.condition.clone(),
                }
            })
            .collect())
    }
}
