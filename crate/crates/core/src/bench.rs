//! Timing harness for the hot kernels: nearest-neighbor voting, exact
//! matching and batched variation. Timings are informational; the only hard
//! check is that parallel voting reproduces the single-threaded histogram.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BallWorld, Sample};
use crate::error::{PeError, Result};
use crate::genapi::{Degree, GenerationApi, SimulatedBackend, SimulatedBackendConfig};
use crate::matching;
use crate::metrics::DEFAULT_EXACT_CAP;
use crate::rng;
use crate::voting::{nn_histogram, nn_histogram_serial};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCase {
    pub name: String,
    pub n_priv: usize,
    pub n_syn: usize,
    pub dim: usize,
    pub repetitions: usize,
    /// Worker threads for the parallel path.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    rayon::current_num_threads()
}

impl BenchCase {
    pub fn new(name: impl Into<String>, n_priv: usize, n_syn: usize, dim: usize, repetitions: usize) -> Self {
        Self {
            name: name.into(),
            n_priv,
            n_syn,
            dim,
            repetitions,
            workers: default_workers(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_priv == 0 || self.n_syn == 0 || self.dim == 0 || self.repetitions == 0 || self.workers == 0 {
            return Err(PeError::InvalidArgument(format!(
                "bench case '{}': all counts must be >= 1",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub case: BenchCase,
    pub kernel: String,
    /// Seconds per repetition.
    pub parallel_secs: Vec<f64>,
    pub serial_secs: Vec<f64>,
    pub outputs_match: bool,
}

impl BenchReport {
    pub fn save_json(&self, dir: impl AsRef<Path>) -> Result<std::path::PathBuf> {
        std::fs::create_dir_all(&dir)?;
        let path = dir.as_ref().join(format!("{}_{}.json", self.kernel, self.case.name));
        let text = serde_json::to_string_pretty(self).map_err(|e| PeError::Backend(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

fn gaussian_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, &[]);
    (0..n)
        .map(|_| (0..dim).map(|_| r.gen::<f64>() * 2.0 - 1.0).collect())
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PeError::InvalidArgument(e.to_string()))
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Parallel voting on `case.workers` threads against the serial reference.
pub fn bench_voting(case: &BenchCase, seed: u64) -> Result<BenchReport> {
    case.validate()?;
    let private = gaussian_points(case.n_priv, case.dim, rng::derive(seed, &[1]));
    let population = gaussian_points(case.n_syn, case.dim, rng::derive(seed, &[2]));
    let pool = pool(case.workers)?;
    let mut report = BenchReport {
        case: case.clone(),
        kernel: "voting".into(),
        parallel_secs: Vec::new(),
        serial_secs: Vec::new(),
        outputs_match: true,
    };
    for _ in 0..case.repetitions {
        let (par, tp) = timed(|| pool.install(|| nn_histogram(&private, &population)));
        let (ser, ts) = timed(|| nn_histogram_serial(&private, &population));
        report.outputs_match &= par? == ser?;
        report.parallel_secs.push(tp);
        report.serial_secs.push(ts);
    }
    Ok(report)
}

/// Exact assignment on an `n × n` cost matrix with `n = min(n_syn, 256)`,
/// with the bottleneck variant as the serial column.
pub fn bench_matching(case: &BenchCase, seed: u64) -> Result<BenchReport> {
    case.validate()?;
    let n = case.n_syn.min(DEFAULT_EXACT_CAP);
    let a = gaussian_points(n, case.dim, rng::derive(seed, &[1]));
    let b = gaussian_points(n, case.dim, rng::derive(seed, &[2]));
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|x| b.iter().map(|y| crate::distance::l2(x, y)).collect())
        .collect();
    let mut report = BenchReport {
        case: case.clone(),
        kernel: "matching".into(),
        parallel_secs: Vec::new(),
        serial_secs: Vec::new(),
        outputs_match: true,
    };
    for _ in 0..case.repetitions {
        let (sum, tp) = timed(|| matching::min_cost_assignment(&cost));
        let (bot, ts) = timed(|| matching::bottleneck_assignment(&cost));
        let (_, total) = sum?;
        let (_, worst) = bot?;
        // The bottleneck optimum is at most the largest cost of any perfect
        // matching, hence at most the min-sum total.
        report.outputs_match &= worst <= total + 1e-9;
        report.parallel_secs.push(tp);
        report.serial_secs.push(ts);
    }
    Ok(report)
}

/// A batched variation call on `case.workers` threads against the same call
/// on one thread.
pub fn bench_variation(case: &BenchCase, seed: u64) -> Result<BenchReport> {
    case.validate()?;
    let world = BallWorld::centered(case.dim, 1.0)?;
    let api = SimulatedBackend::new(SimulatedBackendConfig::new(world, 4, 0.05, true)?)?;
    let samples: Vec<Sample> = api.random(case.n_syn, None, seed)?;
    let degree = Degree::Sigma(0.05);
    let pool = pool(case.workers)?;
    let mut report = BenchReport {
        case: case.clone(),
        kernel: "variation".into(),
        parallel_secs: Vec::new(),
        serial_secs: Vec::new(),
        outputs_match: true,
    };
    for rep in 0..case.repetitions {
        let s = rng::derive(seed, &[rep as u64]);
        let (batched, tp) = timed(|| pool.install(|| api.variation(&samples, &degree, 1, s)));
        let (single, ts) = timed(|| {
            let one = pool_single()?;
            one.install(|| api.variation(&samples, &degree, 1, s))
        });
        report.outputs_match &= batched? == single?;
        report.parallel_secs.push(tp);
        report.serial_secs.push(ts);
    }
    Ok(report)
}

fn pool_single() -> Result<rayon::ThreadPool> {
    pool(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_case() {
        let c = BenchCase::new("one", 1, 1, 1, 1);
        let r = bench_voting(&c, 0).unwrap();
        assert!(r.outputs_match);
        assert_eq!(r.parallel_secs.len(), 1);
    }

    #[test]
    fn worker_counts_do_not_change_histograms() {
        for workers in [1, 2, 4] {
            let mut c = BenchCase::new("w", 700, 300, 8, 1);
            c.workers = workers;
            assert!(bench_voting(&c, 3).unwrap().outputs_match);
            assert!(bench_variation(&c, 3).unwrap().outputs_match);
        }
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(bench_voting(&BenchCase::new("z", 0, 1, 1, 1), 0).is_err());
    }

    #[test]
    fn report_json_file() {
        let dir = tempfile::tempdir().unwrap();
        let r = bench_matching(&BenchCase::new("m", 1, 20, 3, 2), 1).unwrap();
        let p = r.save_json(dir.path()).unwrap();
        let back: BenchReport = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(back.kernel, "matching");
        assert!(back.outputs_match);
    }
}
