//! The evolution loop.
//!
//! One iteration scores the current population with the DP nearest-neighbor
//! histogram, picks parents from the normalized histogram, and asks the
//! backend for offspring:
//!
//! ```text
//! S_1 ← RANDOM_API(N_syn)
//! for t = 1..T:
//!     h_t  ← DP_NN_HISTOGRAM(S_priv, S_t, σ, H)
//!     P_t  ← h_t / sum(h_t)
//!     S_t' ← N_syn draws from P_t with replacement
//!     S_t+1 ← VARIATION_API(S_t')            (∪ S_t' when parents are retained)
//! ```
//!
//! Conditional generation repeats the loop per class with `N_syn/|C|`
//! samples each. Every iteration is one Gaussian-mechanism release, so the
//! privacy cost depends only on (σ, T, δ) and is identical for the
//! conditional and unconditional variants.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{self, PrivacyLedger};
use crate::dataset::{Dataset, Population, Sample};
use crate::embedding::{lookahead_embeddings, Embedder};
use crate::error::{PeError, Result};
use crate::genapi::{random_api, Degree, DegreeSchedule, GenerationApi};
use crate::matching;
use crate::metrics;
use crate::rng::{self, tag};
use crate::voting::{nn_histogram_weighted, VoteHistogram, VotingConfig};

/// How parents `S_t'` are chosen from the released histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentSelection {
    /// `N_syn` multinomial draws from `P_t`.
    #[default]
    Resample,
    /// Every member with positive released count, once (`S_t' = supp(P_t)`).
    Support,
}

/// How offspring are produced from the parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Offspring {
    /// `VARIATION_API` with this many variations per parent at the
    /// scheduled degree.
    PerParent(usize),
    /// `L` draws at each of the backend's `r` scales per parent.
    MultiScale,
}

impl Default for Offspring {
    fn default() -> Self {
        Offspring::PerParent(1)
    }
}

/// Which quality metrics the trace records after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceMetrics {
    pub coverage: bool,
    pub w1: bool,
    pub frechet: bool,
    /// W1 is skipped when distinct-private × population exceeds this.
    pub max_w1_cells: usize,
}

impl Default for TraceMetrics {
    fn default() -> Self {
        Self {
            coverage: true,
            w1: true,
            frechet: true,
            max_w1_cells: 4_000_000,
        }
    }
}

impl TraceMetrics {
    pub fn none() -> Self {
        Self {
            coverage: false,
            w1: false,
            frechet: false,
            max_w1_cells: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub n_syn: usize,
    pub iterations: usize,
    pub voting: VotingConfig,
    pub delta: f64,
    #[serde(default)]
    pub degree_schedule: DegreeSchedule,
    #[serde(default)]
    pub retain_parents: bool,
    pub seed: u64,
    #[serde(default)]
    pub conditional: bool,
    #[serde(default)]
    pub parent_selection: ParentSelection,
    #[serde(default)]
    pub offspring: Offspring,
    /// Stop as soon as the coverage radius drops to this value. Off by
    /// default; the loop normally runs all iterations.
    #[serde(default)]
    pub stop_at_coverage: Option<f64>,
    #[serde(default)]
    pub trace_metrics: TraceMetrics,
}

impl EngineConfig {
    /// Practical defaults: resample `n_syn` parents, one variation each.
    pub fn new(n_syn: usize, iterations: usize, voting: VotingConfig, seed: u64) -> Self {
        Self {
            n_syn,
            iterations,
            voting,
            delta: 1e-5,
            degree_schedule: DegreeSchedule::default(),
            retain_parents: false,
            seed,
            conditional: false,
            parent_selection: ParentSelection::Resample,
            offspring: Offspring::PerParent(1),
            stop_at_coverage: None,
            trace_metrics: TraceMetrics::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_syn == 0 {
            return Err(PeError::InvalidArgument("N_syn must be >= 1".into()));
        }
        self.voting.validate()?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PeError::InvalidArgument(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if let Offspring::PerParent(0) = self.offspring {
            return Err(PeError::InvalidArgument("offspring per parent must be >= 1".into()));
        }
        if self.needs_schedule() {
            self.degree_schedule.validate(self.iterations)?;
        }
        // Fail before any API call if the final ε falls outside the bracket.
        accountant::epsilon_after(self.voting.sigma, self.iterations, self.delta)?;
        Ok(())
    }

    fn needs_schedule(&self) -> bool {
        self.voting.lookahead_k > 0 || matches!(self.offspring, Offspring::PerParent(_))
    }
}

/// One line of the JSONL trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// Privacy spent after `t` releases; `None` when σ = 0 (unbounded).
    pub epsilon: Option<f64>,
    pub hist_std_raw: f64,
    pub hist_std_released: f64,
    pub coverage_radius: Option<f64>,
    pub w1: Option<f64>,
    pub frechet: Option<f64>,
    pub degenerate_histogram: bool,
    pub voted_bins: usize,
    pub surviving_bins: usize,
    pub population_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub final_epsilon: Option<f64>,
    pub delta: f64,
    pub sigma: f64,
    pub config: EngineConfig,
}

impl RunTrace {
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| PeError::Backend(e.to_string()))?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Vec<IterationRecord>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| PeError::Parse {
                    row: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Population after the last iteration.
    pub population: Population,
    pub trace: RunTrace,
    pub ledger: PrivacyLedger,
    /// `history[0]` is the initial population, `history[t]` the population
    /// produced by iteration `t`.
    pub history: Vec<Population>,
    /// Histogram of each iteration, over `history[t - 1]`.
    pub histograms: Vec<VoteHistogram>,
}

struct ClassRun {
    history: Vec<Population>,
    histograms: Vec<VoteHistogram>,
    degenerate: Vec<bool>,
}

/// Inverse-CDF multinomial draws from unnormalized `weights`, one uniform per
/// draw from a single stream in index order. All-zero weights fall back to
/// uniform.
pub fn resample_indices(weights: &[f64], n: usize, seed: u64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut r = rng::stream(seed, &[]);
    if !(total > 0.0) {
        return (0..n).map(|_| r.gen_range(0..weights.len())).collect();
    }
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w.max(0.0);
        cum.push(acc);
    }
    let last = weights.len() - 1;
    (0..n)
        .map(|_| {
            let u = r.gen::<f64>() * acc;
            let mut idx = cum.partition_point(|&c| c <= u).min(last);
            // Never land on a zero-weight bin through rounding at the top end.
            while weights[idx] <= 0.0 && idx > 0 {
                idx -= 1;
            }
            idx
        })
        .collect()
}

struct PrivateVoters {
    points: Vec<Vec<f64>>,
    weights: Vec<u64>,
}

impl PrivateVoters {
    fn new(private: &Dataset, embedder: &Embedder) -> Result<Self> {
        let emb = embedder.embed_all(&private.samples)?;
        let (points, weights) = matching::compress(&emb);
        Ok(Self { points, weights })
    }
}

fn degree_at<'a>(cfg: &'a EngineConfig, t: usize) -> Result<&'a Degree> {
    cfg.degree_schedule.at(t).ok_or_else(|| {
        PeError::InvalidArgument(format!("degree schedule has no entry for iteration {t}"))
    })
}

#[allow(clippy::too_many_arguments)]
fn evolve(
    voters: &PrivateVoters,
    n: usize,
    condition: Option<&str>,
    label: Option<&str>,
    seed: u64,
    cfg: &EngineConfig,
    api: &dyn GenerationApi,
    embedder: &Embedder,
) -> Result<ClassRun> {
    let mut pop = random_api(api, n, condition, rng::derive(seed, &[tag::INIT]))?;
    if let Some(l) = label {
        pop.samples.iter_mut().for_each(|s| s.label = Some(l.to_string()));
    }
    let mut run = ClassRun {
        history: vec![pop.clone()],
        histograms: Vec::with_capacity(cfg.iterations),
        degenerate: Vec::with_capacity(cfg.iterations),
    };
    for t in 1..=cfg.iterations {
        let k = cfg.voting.lookahead_k;
        let pop_emb = if k > 0 {
            lookahead_embeddings(
                &pop.samples,
                k,
                api,
                degree_at(cfg, t)?,
                embedder,
                rng::derive(seed, &[tag::LOOKAHEAD, t as u64]),
            )?
        } else {
            embedder.embed_all(&pop.samples)?
        };
        let raw = nn_histogram_weighted(&voters.points, Some(&voters.weights), &pop_emb)?;
        let hist = VoteHistogram::privatize(
            raw.into_iter().map(|c| c as f64).collect(),
            &cfg.voting,
            rng::derive(seed, &[tag::NOISE, t as u64]),
        )?;
        let degenerate = !(hist.released_total() > 0.0);

        let parent_idx: Vec<usize> = match cfg.parent_selection {
            ParentSelection::Resample => resample_indices(
                &hist.released,
                n,
                rng::derive(seed, &[tag::RESAMPLE, t as u64]),
            ),
            ParentSelection::Support if degenerate => (0..pop.len()).collect(),
            ParentSelection::Support => hist.surviving_bins().collect(),
        };
        let parents: Vec<Sample> = parent_idx.iter().map(|&i| pop.samples[i].clone()).collect();

        let offspring_seed = rng::derive(seed, &[tag::OFFSPRING, t as u64]);
        let offspring: Vec<Sample> = match cfg.offspring {
            Offspring::PerParent(c) => api.variation(&parents, degree_at(cfg, t)?, c, offspring_seed)?,
            Offspring::MultiScale => {
                let groups: Vec<Vec<Sample>> = parents
                    .par_iter()
                    .enumerate()
                    .map(|(i, p)| api.multi_scale_variation(p, rng::derive(offspring_seed, &[i as u64])))
                    .collect::<Result<_>>()?;
                groups.into_iter().flatten().collect()
            }
        };
        let next = if cfg.retain_parents {
            let mut v = parents;
            v.extend(offspring);
            v
        } else {
            offspring
        };
        pop = Population::new(next, t);
        run.history.push(pop.clone());
        run.histograms.push(hist);
        run.degenerate.push(degenerate);

        if let Some(target) = cfg.stop_at_coverage {
            let emb = embedder.embed_all(&pop.samples)?;
            if metrics::coverage_radius(&voters.points, &emb)? <= target {
                break;
            }
        }
    }
    Ok(run)
}

fn check_private(private: &Dataset, api: &dyn GenerationApi, embedder: &Embedder) -> Result<()> {
    if private.is_empty() {
        return Err(PeError::NoSamples);
    }
    let dim = private.dim().unwrap_or(0);
    if dim != api.dim() || dim != embedder.input_dim() {
        return Err(PeError::DimensionMismatch {
            expected: api.dim(),
            found: dim,
            row: None,
        });
    }
    Ok(())
}

fn concat_histograms(parts: &[&VoteHistogram]) -> VoteHistogram {
    let mut out = VoteHistogram {
        raw: Vec::new(),
        noisy: Vec::new(),
        released: Vec::new(),
    };
    for h in parts {
        out.raw.extend(&h.raw);
        out.noisy.extend(&h.noisy);
        out.released.extend(&h.released);
    }
    out
}

fn summarize(
    private: &Dataset,
    cfg: &EngineConfig,
    embedder: &Embedder,
    history: Vec<Population>,
    histograms: Vec<VoteHistogram>,
    degenerate: Vec<bool>,
) -> Result<RunOutput> {
    let mut ledger = PrivacyLedger::new(cfg.voting.sigma, cfg.delta)?;
    let private_emb = embedder.embed_all(&private.samples)?;
    let (priv_distinct, priv_w) = matching::compress(&private_emb);
    let mut records = Vec::with_capacity(histograms.len());
    for (i, (hist, degenerate)) in histograms.iter().zip(&degenerate).enumerate() {
        let t = i + 1;
        ledger.record_release();
        let (hist_std_raw, hist_std_released) = metrics::histogram_std(hist);
        let pop = &history[t];
        let tm = &cfg.trace_metrics;
        let pop_emb = if tm.coverage || tm.w1 || tm.frechet {
            embedder.embed_all(&pop.samples)?
        } else {
            Vec::new()
        };
        let coverage_radius = if tm.coverage {
            Some(metrics::coverage_radius(&priv_distinct, &pop_emb)?)
        } else {
            None
        };
        let w1 = if tm.w1 && priv_distinct.len().saturating_mul(pop_emb.len()) <= tm.max_w1_cells {
            let (pd, pw) = matching::compress(&pop_emb);
            Some(metrics::wasserstein_weighted(&priv_distinct, &priv_w, &pd, &pw, 1.0)?)
        } else {
            None
        };
        let frechet = if tm.frechet && private_emb.len() >= 2 && pop_emb.len() >= 2 {
            Some(metrics::frechet_distance(&private_emb, &pop_emb)?.distance)
        } else {
            None
        };
        let epsilon = ledger.epsilon()?;
        records.push(IterationRecord {
            t,
            epsilon: epsilon.is_finite().then_some(epsilon),
            hist_std_raw,
            hist_std_released,
            coverage_radius,
            w1,
            frechet,
            degenerate_histogram: *degenerate,
            voted_bins: hist.voted_bins().count(),
            surviving_bins: hist.surviving_bins().count(),
            population_size: pop.len(),
        });
    }
    let final_epsilon = ledger.epsilon()?;
    let population = history.last().cloned().unwrap_or_default();
    Ok(RunOutput {
        population,
        trace: RunTrace {
            records,
            final_epsilon: final_epsilon.is_finite().then_some(final_epsilon),
            delta: cfg.delta,
            sigma: cfg.voting.sigma,
            config: cfg.clone(),
        },
        ledger,
        history,
        histograms,
    })
}

/// Unconditional generation over the whole private dataset.
pub fn run_unconditional(
    private: &Dataset,
    cfg: &EngineConfig,
    api: &dyn GenerationApi,
    embedder: &Embedder,
) -> Result<RunOutput> {
    cfg.validate()?;
    check_private(private, api, embedder)?;
    let voters = PrivateVoters::new(private, embedder)?;
    let run = evolve(&voters, cfg.n_syn, None, None, cfg.seed, cfg, api, embedder)?;
    summarize(private, cfg, embedder, run.history, run.histograms, run.degenerate)
}

/// Seed of one class's independent run.
pub fn class_seed(seed: u64, label: &str) -> u64 {
    rng::derive(seed, &[tag::CLASS, rng::hash_str(label)])
}

/// Runs the loop separately for every class with `N_syn/|C|` samples each
/// and returns the labeled union (classes in sorted order).
pub fn run_conditional(
    private: &Dataset,
    cfg: &EngineConfig,
    api: &dyn GenerationApi,
    embedder: &Embedder,
) -> Result<RunOutput> {
    cfg.validate()?;
    check_private(private, api, embedder)?;
    let classes: Vec<&String> = private.classes.iter().collect();
    if classes.is_empty() {
        return Err(PeError::InvalidArgument(
            "conditional generation needs labeled private data".into(),
        ));
    }
    if cfg.n_syn % classes.len() != 0 {
        return Err(PeError::InvalidArgument(format!(
            "N_syn = {} is not divisible by the {} classes",
            cfg.n_syn,
            classes.len()
        )));
    }
    let per_class = cfg.n_syn / classes.len();
    let runs: Vec<ClassRun> = classes
        .par_iter()
        .map(|label| {
            let subset = private.class_subset(label);
            if subset.is_empty() {
                return Err(PeError::EmptyClass(label.to_string()));
            }
            let voters = PrivateVoters::new(&subset, embedder)?;
            evolve(
                &voters,
                per_class,
                Some(label),
                Some(label),
                class_seed(cfg.seed, label),
                cfg,
                api,
                embedder,
            )
        })
        .collect::<Result<_>>()?;

    // Classes may stop early at different iterations; the merged trace
    // covers the iterations every class completed.
    let steps = runs.iter().map(|r| r.histograms.len()).min().unwrap_or(0);
    let history: Vec<Population> = (0..=steps)
        .map(|t| {
            Population::new(
                runs.iter().flat_map(|r| r.history[t].samples.iter().cloned()).collect(),
                t,
            )
        })
        .collect();
    let histograms: Vec<VoteHistogram> = (0..steps)
        .map(|t| concat_histograms(&runs.iter().map(|r| &r.histograms[t]).collect::<Vec<_>>()))
        .collect();
    let degenerate: Vec<bool> = (0..steps)
        .map(|t| runs.iter().any(|r| r.degenerate[t]))
        .collect();
    summarize(private, cfg, embedder, history, histograms, degenerate)
}

/// Dispatches on `cfg.conditional`.
pub fn run(
    private: &Dataset,
    cfg: &EngineConfig,
    api: &dyn GenerationApi,
    embedder: &Embedder,
) -> Result<RunOutput> {
    if cfg.conditional {
        run_conditional(private, cfg, api, embedder)
    } else {
        run_unconditional(private, cfg, api, embedder)
    }
}

/// More samples from a finished synthetic set, by repeated variation of the
/// whole set. Uses no private data.
pub fn generate_more(
    syn: &Population,
    multiplier: usize,
    api: &dyn GenerationApi,
    degree: &Degree,
    seed: u64,
) -> Result<Population> {
    if syn.is_empty() {
        return Err(PeError::NoSamples);
    }
    if multiplier == 0 {
        return Err(PeError::InvalidArgument("multiplier must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(syn.len() * multiplier);
    for rep in 0..multiplier {
        out.extend(api.variation(&syn.samples, degree, 1, rng::derive(seed, &[tag::MORE, rep as u64]))?);
    }
    Ok(Population::new(out, syn.generation))
}
