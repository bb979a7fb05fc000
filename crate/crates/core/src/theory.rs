//! Convergence harness on the bounded-ball model.
//!
//! A [`TheoryWorld`] is a set of distinct support points inside a ball, each
//! repeated `B` times. Trials run the evolution loop against the simulated
//! backend and record when every private point first has a synthetic sample
//! within η (the coverage radius drops to η).
//!
//! Two trial modes exist. `Theory` keeps parents, uses the support of the
//! released histogram as the parent set and draws multi-scale offspring.
//! `Practical` is the deployed loop: resample `N_syn` parents and replace
//! them with one variation each.
//!
//! Populations are indexed from 1: `S_1` is the initial population and
//! `S_{t+1}` is the output of iteration `t`. Iterations-to-η is the index of
//! the first `S_t` whose coverage radius is at most η.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BallWorld, Dataset, Sample};
use crate::embedding::Embedder;
use crate::engine::{self, EngineConfig, Offspring, ParentSelection, RunOutput, TraceMetrics};
use crate::error::{PeError, Result};
use crate::genapi::{Degree, DegreeSchedule, GenerationApi, SimulatedBackend, SimulatedBackendConfig};
use crate::matching;
use crate::metrics;
use crate::rng::{self, tag};
use crate::voting::VotingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryWorld {
    pub ball: BallWorld,
    pub support: Vec<Vec<f64>>,
    pub multiplicity: usize,
    pub eta: f64,
    pub tau: f64,
}

impl TheoryWorld {
    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() {
            return Err(PeError::NoSamples);
        }
        if self.multiplicity == 0 {
            return Err(PeError::InvalidArgument("multiplicity B must be >= 1".into()));
        }
        if !(self.eta > 0.0) {
            return Err(PeError::InvalidArgument(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(PeError::InvalidArgument(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        for (i, p) in self.support.iter().enumerate() {
            if p.len() != self.ball.dim() {
                return Err(PeError::DimensionMismatch {
                    expected: self.ball.dim(),
                    found: p.len(),
                    row: Some(i),
                });
            }
            if !self.ball.contains(p) {
                return Err(PeError::InvalidArgument(format!("support point {i} lies outside the ball")));
            }
            if self.support[..i].iter().any(|q| q == p) {
                return Err(PeError::InvalidArgument(format!("support point {i} is a duplicate")));
            }
        }
        Ok(())
    }

    /// Private set size `N_priv = |support| · B`.
    pub fn n_priv(&self) -> usize {
        self.support.len() * self.multiplicity
    }
}

/// The private dataset: every support point repeated `B` times.
pub fn build_world(world: &TheoryWorld) -> Result<Dataset> {
    world.validate()?;
    let samples = world
        .support
        .iter()
        .flat_map(|p| std::iter::repeat(p).take(world.multiplicity))
        .map(|p| Sample::new(p.clone()))
        .collect();
    Dataset::new(samples)
}

/// `d·ln(D/η)/ln L + ln(N_priv/τ)`, the iteration bound with unit constants.
pub fn theorem1_rhs(dim: usize, diameter: f64, eta: f64, l: usize, n_priv: usize, tau: f64) -> f64 {
    let log_l = (l.max(2) as f64).ln();
    let first = dim as f64 * (diameter / eta).ln().max(0.0) / log_l;
    first + (n_priv as f64 / tau).ln().max(0.0)
}

pub fn default_t_max(dim: usize, diameter: f64, eta: f64, l: usize, n_priv: usize, tau: f64) -> usize {
    (10.0 * theorem1_rhs(dim, diameter, eta, l, n_priv, tau)).ceil().max(1.0) as usize
}

/// `H = 4σ·sqrt(ln(T·L·N_priv/τ))`.
pub fn default_threshold(sigma: f64, t: usize, l: usize, n_priv: usize, tau: f64) -> f64 {
    let arg = (t.max(1) * l.max(1) * n_priv.max(1)) as f64 / tau;
    4.0 * sigma * arg.ln().max(0.0).sqrt()
}

/// `B = ⌈5H⌉`, at least 1.
pub fn default_multiplicity(threshold: f64) -> usize {
    ((5.0 * threshold).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialMode {
    #[default]
    Theory,
    Practical,
}

/// Everything one trial needs apart from its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialSpec {
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_diameter")]
    pub diameter: f64,
    #[serde(default = "d_support")]
    pub support_size: usize,
    /// `B`; defaults to 1 without noise and to `⌈5H⌉` with noise.
    #[serde(default)]
    pub multiplicity: Option<usize>,
    #[serde(default = "d_eta")]
    pub eta: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,
    /// `L`, variations per scale.
    #[serde(default = "d_l")]
    pub variations_per_scale: usize,
    #[serde(default = "d_support")]
    pub n_syn: usize,
    #[serde(default)]
    pub sigma: f64,
    /// `H`; defaults to `4σ·sqrt(ln(T·L·N_priv/τ))`.
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub lookahead_k: usize,
    /// `T_max`; defaults to 10× the Theorem-1 bound with unit constants.
    #[serde(default)]
    pub iterations: Option<usize>,
    /// Stop once the coverage radius reaches η.
    #[serde(default)]
    pub stop_at_eta: bool,
    #[serde(default)]
    pub mode: TrialMode,
    /// Variation degree for practical offspring and for lookahead.
    #[serde(default = "d_degree")]
    pub degree: Degree,
    #[serde(default = "d_delta")]
    pub delta: f64,
}

fn d_dim() -> usize {
    2
}
fn d_diameter() -> f64 {
    1.0
}
fn d_support() -> usize {
    10
}
fn d_eta() -> f64 {
    0.05
}
fn d_tau() -> f64 {
    0.05
}
fn d_l() -> usize {
    16
}
fn d_degree() -> Degree {
    Degree::Sigma(0.02)
}
fn d_delta() -> f64 {
    1e-5
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            dim: d_dim(),
            diameter: d_diameter(),
            support_size: d_support(),
            multiplicity: None,
            eta: d_eta(),
            tau: d_tau(),
            variations_per_scale: d_l(),
            n_syn: d_support(),
            sigma: 0.0,
            threshold: None,
            lookahead_k: 0,
            iterations: None,
            stop_at_eta: false,
            mode: TrialMode::Theory,
            degree: d_degree(),
            delta: d_delta(),
        }
    }
}

impl TrialSpec {
    pub fn resolved_iterations(&self) -> usize {
        self.iterations.unwrap_or_else(|| {
            let b = self.multiplicity.unwrap_or(1);
            default_t_max(
                self.dim,
                self.diameter,
                self.eta,
                self.variations_per_scale,
                self.support_size * b,
                self.tau,
            )
        })
    }

    pub fn resolved_threshold(&self) -> f64 {
        self.threshold.unwrap_or_else(|| {
            let b = self.multiplicity.unwrap_or(1);
            default_threshold(
                self.sigma,
                self.resolved_iterations(),
                self.variations_per_scale,
                self.support_size * b,
                self.tau,
            )
        })
    }

    pub fn resolved_multiplicity(&self) -> usize {
        match self.multiplicity {
            Some(b) => b,
            None if self.sigma > 0.0 => default_multiplicity(self.resolved_threshold()),
            None => 1,
        }
    }

    /// A fresh world whose support is drawn uniformly from the ball.
    pub fn world(&self, seed: u64) -> Result<TheoryWorld> {
        let ball = BallWorld::centered(self.dim, self.diameter)?;
        let api = self.backend(ball.clone())?;
        let support = api
            .random(self.support_size, None, rng::derive(seed, &[tag::WORLD]))?
            .into_iter()
            .map(|s| s.coords)
            .collect();
        let world = TheoryWorld {
            ball,
            support,
            multiplicity: self.resolved_multiplicity(),
            eta: self.eta,
            tau: self.tau,
        };
        world.validate()?;
        Ok(world)
    }

    fn backend(&self, ball: BallWorld) -> Result<SimulatedBackend> {
        SimulatedBackend::new(SimulatedBackendConfig::new(
            ball,
            self.variations_per_scale,
            self.eta,
            true,
        )?)
    }

    fn engine_config(&self, world: &TheoryWorld, seed: u64) -> Result<EngineConfig> {
        let t = self.resolved_iterations();
        let voting = VotingConfig::new(self.sigma, self.resolved_threshold(), self.lookahead_k)?;
        let mut cfg = EngineConfig::new(self.n_syn, t, voting, seed);
        cfg.delta = self.delta;
        cfg.degree_schedule = DegreeSchedule::constant(self.degree.clone(), t);
        cfg.trace_metrics = TraceMetrics {
            coverage: true,
            ..TraceMetrics::none()
        };
        cfg.stop_at_coverage = self.stop_at_eta.then_some(world.eta);
        match self.mode {
            TrialMode::Theory => {
                cfg.retain_parents = true;
                cfg.parent_selection = ParentSelection::Support;
                cfg.offspring = Offspring::MultiScale;
            }
            TrialMode::Practical => {
                cfg.retain_parents = false;
                cfg.parent_selection = ParentSelection::Resample;
                cfg.offspring = Offspring::PerParent(1);
            }
        }
        Ok(cfg)
    }
}

/// What one trial reports.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub seed: u64,
    /// Index of the first covering `S_t`, `None` on timeout.
    pub iters_to_eta: Option<usize>,
    /// Coverage radius of `S_1, S_2, ...`.
    pub coverage: Vec<f64>,
    pub final_coverage: f64,
    pub final_w1: f64,
    /// Per iteration: surviving bins are exactly the voted bins.
    pub survivors_match_votes: Vec<bool>,
    pub degenerate: Vec<bool>,
    pub run: RunOutput,
}

impl TrialOutcome {
    /// Coverage never grew from one population to the next.
    pub fn coverage_monotone(&self) -> bool {
        self.coverage.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Runs the loop on `world` with `spec`'s parameters (σ and H included).
pub fn run_trial(world: &TheoryWorld, spec: &TrialSpec, seed: u64) -> Result<TrialOutcome> {
    let private = build_world(world)?;
    let api = spec.backend(world.ball.clone())?;
    let embedder = Embedder::identity(world.ball.dim());
    let cfg = spec.engine_config(world, seed)?;
    let (priv_points, priv_w) = matching::compress(&world_points(&private));

    let initial = api.random(cfg.n_syn, None, rng::derive(seed, &[tag::INIT]))?;
    let initial_points: Vec<Vec<f64>> = initial.iter().map(|s| s.coords.clone()).collect();
    let initial_cov = metrics::coverage_radius(&priv_points, &initial_points)?;

    let run = if spec.stop_at_eta && initial_cov <= world.eta {
        let mut c = cfg.clone();
        c.iterations = 0;
        engine::run_unconditional(&private, &c, &api, &embedder)?
    } else {
        engine::run_unconditional(&private, &cfg, &api, &embedder)?
    };

    let mut coverage = vec![initial_cov];
    coverage.extend(run.trace.records.iter().map(|r| r.coverage_radius.unwrap_or(f64::NAN)));
    let iters_to_eta = coverage.iter().position(|&c| c <= world.eta).map(|i| i + 1);
    let final_coverage = *coverage.last().unwrap_or(&f64::NAN);
    let final_points: Vec<Vec<f64>> = run.population.samples.iter().map(|s| s.coords.clone()).collect();
    let (fp, fw) = matching::compress(&final_points);
    let final_w1 = metrics::wasserstein_weighted(&priv_points, &priv_w, &fp, &fw, 1.0)?;
    let survivors_match_votes = run.histograms.iter().map(|h| h.survivors_match_votes()).collect();
    let degenerate = run.trace.records.iter().map(|r| r.degenerate_histogram).collect();
    Ok(TrialOutcome {
        seed,
        iters_to_eta,
        coverage,
        final_coverage,
        final_w1,
        survivors_match_votes,
        degenerate,
        run,
    })
}

fn world_points(d: &Dataset) -> Vec<Vec<f64>> {
    d.samples.iter().map(|s| s.coords.clone()).collect()
}

/// Non-private run (σ = H = 0) stopping at the first covering population.
pub fn run_nonprivate_trial(
    world: &TheoryWorld,
    spec: &TrialSpec,
    t_max: usize,
    seed: u64,
) -> Result<TrialOutcome> {
    let spec = TrialSpec {
        sigma: 0.0,
        threshold: Some(0.0),
        iterations: Some(t_max),
        stop_at_eta: true,
        ..spec.clone()
    };
    run_trial(world, &spec, seed)
}

/// Private run for exactly `t` iterations.
pub fn run_private_trial(
    world: &TheoryWorld,
    spec: &TrialSpec,
    sigma: f64,
    threshold: f64,
    t: usize,
    seed: u64,
) -> Result<TrialOutcome> {
    let spec = TrialSpec {
        sigma,
        threshold: Some(threshold),
        iterations: Some(t),
        ..spec.clone()
    };
    run_trial(world, &spec, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    L,
    B,
    Sigma,
    H,
    LookaheadK,
    NSyn,
    D,
}

impl Axis {
    pub const NAMES: [&'static str; 7] = ["L", "B", "sigma", "H", "lookahead_k", "N_syn", "d"];

    fn apply(&self, spec: &TrialSpec, value: f64) -> Result<TrialSpec> {
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(PeError::InvalidArgument(format!("axis {self} needs a whole number, got {value}")))
            }
        };
        let mut s = spec.clone();
        match self {
            Axis::L => s.variations_per_scale = count()?,
            Axis::B => s.multiplicity = Some(count()?),
            Axis::Sigma => s.sigma = value,
            Axis::H => s.threshold = Some(value),
            Axis::LookaheadK => s.lookahead_k = count()?,
            Axis::NSyn => s.n_syn = count()?,
            Axis::D => s.dim = count()?,
        }
        Ok(s)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = [Axis::L, Axis::B, Axis::Sigma, Axis::H, Axis::LookaheadK, Axis::NSyn, Axis::D]
            .iter()
            .position(|a| a == self)
            .unwrap();
        f.write_str(Axis::NAMES[i])
    }
}

impl FromStr for Axis {
    type Err = PeError;

    fn from_str(s: &str) -> Result<Self> {
        let all = [Axis::L, Axis::B, Axis::Sigma, Axis::H, Axis::LookaheadK, Axis::NSyn, Axis::D];
        Axis::NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| all[i])
            .ok_or_else(|| {
                PeError::InvalidArgument(format!(
                    "unknown axis '{s}'; valid axes: {}",
                    Axis::NAMES.join(", ")
                ))
            })
    }
}

/// Per-value statistic used by trend checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    MedianIters,
    MeanCoverage,
    MeanW1,
    ConvergedFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Check {
    /// Every value converges in at least this fraction of trials.
    MinConverged { fraction: f64 },
    NonIncreasing { stat: Statistic },
    NonDecreasing { stat: Statistic },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(with = "axis_name")]
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub base: TrialSpec,
    #[serde(default)]
    pub checks: Vec<Check>,
}

fn d_trials() -> usize {
    20
}

mod axis_name {
    use super::Axis;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Axis, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&a.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Axis, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub iters_to_eta: Option<usize>,
    pub final_coverage: f64,
    #[serde(rename = "final_W1")]
    pub final_w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueSummary {
    pub value: f64,
    pub trials: usize,
    pub converged_fraction: f64,
    /// Timeouts count as `T_max + 1`.
    pub median_iters: f64,
    pub mean_coverage: f64,
    pub mean_w1: f64,
}

impl ValueSummary {
    pub fn stat(&self, s: Statistic) -> f64 {
        match s {
            Statistic::MedianIters => self.median_iters,
            Statistic::MeanCoverage => self.mean_coverage,
            Statistic::MeanW1 => self.mean_w1,
            Statistic::ConvergedFraction => self.converged_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<ValueSummary>,
    pub checks: Vec<CheckResult>,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["value", "seed", "iters_to_eta", "final_coverage", "final_W1"])
            .map_err(csv_err)?;
        for r in &self.rows {
            out.write_record([
                format!("{:?}", r.value),
                r.seed.to_string(),
                r.iters_to_eta.map(|t| t.to_string()).unwrap_or_default(),
                format!("{:?}", r.final_coverage),
                format!("{:?}", r.final_w1),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn csv_err(e: csv::Error) -> PeError {
    PeError::Io(std::io::Error::other(e))
}

/// Seeds shared by every value of a sweep, so comparisons are paired.
pub fn trial_seeds(base_seed: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|i| rng::derive(base_seed, &[tag::TRIAL, i])).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// One batch of paired trials per axis value, all run in parallel.
pub fn sweep(spec: &SweepSpec) -> Result<SweepReport> {
    if spec.values.is_empty() {
        return Err(PeError::InvalidArgument("sweep needs at least one value".into()));
    }
    if spec.trials == 0 {
        return Err(PeError::InvalidArgument("sweep needs at least one trial".into()));
    }
    let specs: Vec<TrialSpec> = spec
        .values
        .iter()
        .map(|&v| spec.axis.apply(&spec.base, v))
        .collect::<Result<_>>()?;
    let seeds = trial_seeds(spec.seed, spec.trials);
    let jobs: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let world = specs[i].world(seed)?;
            let o = run_trial(&world, &specs[i], seed)?;
            Ok(SweepRow {
                value: spec.values[i],
                seed,
                iters_to_eta: o.iters_to_eta,
                final_coverage: o.final_coverage,
                final_w1: o.final_w1,
            })
        })
        .collect::<Result<_>>()?;

    let summaries: Vec<ValueSummary> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let batch: Vec<&SweepRow> = rows[i * seeds.len()..(i + 1) * seeds.len()].iter().collect();
            let timeout = (s.resolved_iterations() + 2) as f64;
            ValueSummary {
                value: spec.values[i],
                trials: batch.len(),
                converged_fraction: batch.iter().filter(|r| r.iters_to_eta.is_some()).count() as f64
                    / batch.len() as f64,
                median_iters: median(
                    batch
                        .iter()
                        .map(|r| r.iters_to_eta.map(|t| t as f64).unwrap_or(timeout))
                        .collect(),
                ),
                mean_coverage: mean(batch.iter().map(|r| r.final_coverage)),
                mean_w1: mean(batch.iter().map(|r| r.final_w1)),
            }
        })
        .collect();

    let checks = spec.checks.iter().map(|c| evaluate(c, &summaries)).collect();
    Ok(SweepReport {
        axis: spec.axis.to_string(),
        rows,
        summaries,
        checks,
    })
}

fn evaluate(check: &Check, summaries: &[ValueSummary]) -> CheckResult {
    let series = |s: Statistic| summaries.iter().map(|v| v.stat(s)).collect::<Vec<_>>();
    let (passed, detail) = match check {
        Check::MinConverged { fraction } => {
            let f = series(Statistic::ConvergedFraction);
            (f.iter().all(|x| x >= fraction), format!("converged fractions {f:?}, need >= {fraction}"))
        }
        Check::NonIncreasing { stat } => {
            let v = series(*stat);
            (v.windows(2).all(|w| w[1] <= w[0]), format!("{stat:?} {v:?}"))
        }
        Check::NonDecreasing { stat } => {
            let v = series(*stat);
            (v.windows(2).all(|w| w[1] >= w[0]), format!("{stat:?} {v:?}"))
        }
    };
    CheckResult {
        check: check.clone(),
        passed,
        detail,
    }
}

/// Per-value grouping helper for callers that hold raw rows.
pub fn rows_by_value(rows: &[SweepRow]) -> BTreeMap<String, Vec<&SweepRow>> {
    let mut m: BTreeMap<String, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        m.entry(format!("{:?}", r.value)).or_default().push(r);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_world(b: usize) -> TheoryWorld {
        TheoryWorld {
            ball: BallWorld::centered(2, 1.0).unwrap(),
            support: vec![vec![0.1, 0.2], vec![-0.2, 0.0]],
            multiplicity: b,
            eta: 0.05,
            tau: 0.05,
        }
    }

    #[test]
    fn build_world_counts() {
        assert_eq!(build_world(&small_world(3)).unwrap().len(), 6);
        let one = build_world(&small_world(1)).unwrap();
        assert_eq!(world_points(&one), small_world(1).support);
    }

    #[test]
    fn build_world_rejects_bad_support() {
        let mut w = small_world(1);
        w.support.push(vec![0.1, 0.2]);
        assert!(build_world(&w).is_err());
        let mut w = small_world(1);
        w.support.push(vec![0.6, 0.0]);
        assert!(build_world(&w).is_err());
        let mut w = small_world(1);
        w.multiplicity = 0;
        assert!(build_world(&w).is_err());
    }

    #[test]
    fn vacuous_eta_converges_immediately() {
        let spec = TrialSpec {
            eta: 1.0,
            ..TrialSpec::default()
        };
        let mut w = small_world(1);
        w.eta = 1.0;
        let o = run_nonprivate_trial(&w, &spec, 10, 3).unwrap();
        assert_eq!(o.iters_to_eta, Some(1));
        assert_eq!(o.run.trace.records.len(), 0);
    }

    #[test]
    fn private_with_zero_noise_reproduces_nonprivate() {
        let spec = TrialSpec::default();
        let w = small_world(1);
        let a = run_nonprivate_trial(&w, &spec, 30, 9).unwrap();
        let t = a.run.trace.records.len();
        let b = run_private_trial(&w, &spec, 0.0, 0.0, t, 9).unwrap();
        assert_eq!(a.run.history, b.run.history);
        assert_eq!(a.coverage, b.coverage);
    }

    #[test]
    fn coverage_is_monotone_with_parents_retained() {
        let spec = TrialSpec::default();
        let o = run_nonprivate_trial(&small_world(1), &spec, 40, 1).unwrap();
        assert!(o.coverage_monotone(), "{:?}", o.coverage);
        assert!(o.iters_to_eta.is_some());
    }

    #[test]
    fn single_copy_with_high_threshold_is_degenerate() {
        let spec = TrialSpec::default();
        let o = run_private_trial(&small_world(1), &spec, 10.0, 40.0, 1, 4).unwrap();
        assert!(o.degenerate[0]);
    }

    #[test]
    fn axis_names_round_trip() {
        for n in Axis::NAMES {
            assert_eq!(n.parse::<Axis>().unwrap().to_string(), n);
        }
        let err = "speed".parse::<Axis>().unwrap_err().to_string();
        assert!(err.contains("lookahead_k"), "{err}");
    }

    #[test]
    fn defaults_follow_formulas() {
        let h = default_threshold(10.0, 100, 16, 10, 0.05);
        assert!((h - 40.0 * (100.0f64 * 16.0 * 10.0 / 0.05).ln().sqrt()).abs() < 1e-12);
        assert_eq!(default_multiplicity(40.0), 200);
        let rhs = theorem1_rhs(2, 1.0, 0.05, 16, 10, 0.05);
        assert!((rhs - (2.0 * 20f64.ln() / 16f64.ln() + 200f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn single_value_sweep_has_one_batch() {
        let spec = SweepSpec {
            axis: Axis::L,
            values: vec![8.0],
            trials: 3,
            seed: 1,
            base: TrialSpec {
                iterations: Some(15),
                stop_at_eta: true,
                ..TrialSpec::default()
            },
            checks: vec![Check::MinConverged { fraction: 0.0 }],
        };
        let r = sweep(&spec).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.summaries.len(), 1);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("value,seed,iters_to_eta,final_coverage,final_W1"));
        assert_eq!(text.lines().count(), 4);
    }
}
