use std::fmt;
use std::path::{Path, PathBuf};

use pe_core::accountant;
use pe_core::bench::{self, BenchCase, BenchReport};
use pe_core::dataset::{load_dataset, save_dataset};
use pe_core::embedding::Embedder;
use pe_core::engine::{self, RunTrace};
use pe_core::genapi::{Degree, GenerationApi, HttpBackend, SimulatedBackend, SimulatedBackendConfig};
use pe_core::metrics::{self, Order, DEFAULT_EXACT_CAP};
use pe_core::theory::{self, SweepReport, SweepSpec, TrialSpec};
use pe_core::{Dataset, Format, Population};
use serde::Serialize;

use crate::config::{BackendKind, RunConfig};
use crate::CliError;

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}

fn points(d: &Dataset) -> Vec<Vec<f64>> {
    d.samples.iter().map(|s| s.coords.clone()).collect()
}

pub fn backend(cfg: &RunConfig) -> Result<Box<dyn GenerationApi>, CliError> {
    Ok(match cfg.api.backend {
        BackendKind::Simulated => {
            let mut sc = SimulatedBackendConfig::new(cfg.ball()?, cfg.api.variations_per_scale, cfg.api.eta, cfg.api.clip)?;
            sc.log_base = cfg.api.log_base;
            Box::new(SimulatedBackend::new(sc)?)
        }
        BackendKind::Http => Box::new(HttpBackend::new(
            cfg.api.endpoint.clone().unwrap_or_default(),
            cfg.world.dimension,
        )?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub sigma: f64,
    pub delta: f64,
    pub iterations: usize,
    /// `None` when σ = 0 (no privacy guarantee).
    pub epsilon: Option<f64>,
    pub samples: usize,
    pub trace: PathBuf,
    pub dataset: PathBuf,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed        {}", self.seed)?;
        writeln!(f, "iterations  {}", self.iterations)?;
        writeln!(f, "sigma       {}", self.sigma)?;
        match self.epsilon {
            Some(e) => writeln!(f, "privacy     (epsilon = {e}, delta = {})", self.delta)?,
            None => writeln!(f, "privacy     none (sigma = 0)")?,
        }
        writeln!(f, "samples     {}", self.samples)?;
        writeln!(f, "trace       {}", self.trace.display())?;
        write!(f, "dataset     {}", self.dataset.display())
    }
}

/// Loads the config, runs the engine and writes the trace, the synthetic
/// dataset and (optionally) the JSON summary and intermediate populations.
pub fn cmd_run(config_path: &Path) -> Result<RunSummary, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let private = load_dataset(&cfg.data.path, cfg.data_format())?;
    if private.dim() != Some(cfg.world.dimension) {
        return Err(CliError::Field {
            field: "world.dimension".into(),
            message: format!(
                "is {} but {} has dimension {}",
                cfg.world.dimension,
                cfg.data.path.display(),
                private.dim().unwrap_or(0)
            ),
        });
    }
    let engine_cfg = cfg.engine_config()?;
    let api = backend(&cfg)?;
    let embedder = Embedder::from_spec(&cfg.api.embedder, cfg.world.dimension)?;
    ensure_parent(&cfg.output.trace)?;
    ensure_parent(&cfg.output.dataset)?;
    if let Some(s) = &cfg.output.summary {
        ensure_parent(s)?;
    }

    let out = engine::run(&private, &engine_cfg, api.as_ref(), &embedder)?;

    out.trace.save_jsonl(&cfg.output.trace)?;
    let out_format = Format::from_path(&cfg.output.dataset);
    save_dataset(&out.population.clone().into_dataset()?, &cfg.output.dataset, out_format)?;
    if cfg.output.persist_intermediate {
        let dir = cfg.output.intermediate_dir.as_ref().expect("validated");
        std::fs::create_dir_all(dir)?;
        for (t, pop) in out.history.iter().enumerate() {
            save_dataset(&pop.clone().into_dataset()?, dir.join(format!("population_{t:04}.csv")), Format::Csv)?;
        }
    }
    let summary = RunSummary {
        seed: engine_cfg.seed,
        sigma: out.trace.sigma,
        delta: out.trace.delta,
        iterations: out.trace.records.len(),
        epsilon: out.trace.final_epsilon,
        samples: out.population.len(),
        trace: cfg.output.trace.clone(),
        dataset: cfg.output.dataset.clone(),
    };
    if let Some(path) = &cfg.output.summary {
        std::fs::write(path, to_json(&summary))?;
    }
    Ok(summary)
}

/// Reads a JSONL trace back.
pub fn read_trace(path: &Path) -> Result<Vec<engine::IterationRecord>, CliError> {
    Ok(RunTrace::read_jsonl(&std::fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccountantReport {
    pub sigma: f64,
    pub effective_sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub iterations: usize,
}

pub fn cmd_accountant(
    sigma: Option<f64>,
    epsilon: Option<f64>,
    delta: f64,
    iterations: usize,
) -> Result<AccountantReport, CliError> {
    let (sigma, epsilon) = match (sigma, epsilon) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give --sigma or --epsilon, not both".into())),
        (None, None) => return Err(CliError::Usage("one of --sigma or --epsilon is required".into())),
        (Some(s), None) => {
            accountant::effective_sigma(s, iterations)?;
            (s, accountant::epsilon_after(s, iterations, delta)?)
        }
        (None, Some(e)) => (accountant::sigma_for_budget(e, delta, iterations)?, e),
    };
    Ok(AccountantReport {
        sigma,
        effective_sigma: accountant::effective_sigma(sigma, iterations)?,
        epsilon,
        delta,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfPercentiles {
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n_a: usize,
    pub n_b: usize,
    pub w1: f64,
    /// `assignment` for equal sizes within the cap, else `transport`.
    pub w1_method: String,
    pub coverage_a_to_b: f64,
    pub coverage_b_to_a: f64,
    pub frechet: Option<f64>,
    pub nn_cdf_a_to_b: CdfPercentiles,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    /// Insist on the assignment solver, failing past `cap`.
    pub exact: bool,
    pub cap: usize,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            exact: false,
            cap: DEFAULT_EXACT_CAP,
        }
    }
}

pub fn cmd_metrics(a: &Path, b: &Path, opts: MetricsOptions) -> Result<MetricsReport, CliError> {
    let da = load_dataset(a, Format::from_path(a))?;
    let db = load_dataset(b, Format::from_path(b))?;
    let (pa, pb) = (points(&da), points(&db));
    let use_assignment = opts.exact || (pa.len() == pb.len() && pa.len() <= opts.cap);
    let (w1, method) = if use_assignment {
        let c = metrics::wasserstein_p(&pa, &pb, Order::Finite(1.0), opts.cap).map_err(|e| match e {
            pe_core::PeError::SizeCap { .. } => CliError::Usage(format!("{e}; pass --cap N to override")),
            e => e.into(),
        })?;
        (c.cost, "assignment")
    } else {
        (metrics::wasserstein_transport(&pa, &pb, 1.0)?, "transport")
    };
    let cdf = metrics::nn_distance_cdf(&pa, &pb)?;
    let q = |p| metrics::quantile(&cdf, p).unwrap_or(f64::NAN);
    let frechet = if pa.len() >= 2 && pb.len() >= 2 {
        Some(metrics::frechet_distance(&pa, &pb)?.distance)
    } else {
        None
    };
    Ok(MetricsReport {
        n_a: pa.len(),
        n_b: pb.len(),
        w1,
        w1_method: method.into(),
        coverage_a_to_b: metrics::coverage_radius(&pa, &pb)?,
        coverage_b_to_a: metrics::coverage_radius(&pb, &pa)?,
        frechet,
        nn_cdf_a_to_b: CdfPercentiles {
            p10: q(0.1),
            p50: q(0.5),
            p90: q(0.9),
            max: q(1.0),
        },
    })
}

pub fn load_sweep(path: &Path) -> Result<SweepSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryOutcome {
    pub csv: PathBuf,
    pub report: SweepReport,
}

/// Runs a sweep spec and writes its CSV next to the spec unless `out` is
/// given. Failing checks are reported in the outcome, not as an error.
pub fn cmd_theory(spec_path: &Path, out: Option<&Path>) -> Result<TheoryOutcome, CliError> {
    let spec = load_sweep(spec_path)?;
    let csv = out.map(Path::to_path_buf).unwrap_or_else(|| spec_path.with_extension("csv"));
    let report = theory::sweep(&spec)?;
    ensure_parent(&csv)?;
    report.write_csv(std::fs::File::create(&csv)?)?;
    Ok(TheoryOutcome { csv, report })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateMoreSummary {
    pub input_samples: usize,
    pub multiplier: usize,
    pub output_samples: usize,
    pub output: PathBuf,
    pub notice: String,
}

/// Expands a finished synthetic dataset by variation. The backend and seed
/// come from the run config; the degree defaults to the schedule's last
/// entry.
pub fn cmd_generate_more(
    dataset: &Path,
    multiplier: usize,
    config_path: &Path,
    out: &Path,
    degree: Option<Degree>,
) -> Result<GenerateMoreSummary, CliError> {
    if multiplier == 0 {
        return Err(CliError::Usage("--multiplier must be >= 1".into()));
    }
    let cfg = RunConfig::load(config_path)?;
    let syn = load_dataset(dataset, Format::from_path(dataset))?;
    let degree = match degree.or_else(|| cfg.api.degree_schedule.last().copied()) {
        Some(d) => d,
        None => {
            return Err(CliError::Usage(
                "no degree: pass --degree or set api.degree_schedule".into(),
            ))
        }
    };
    let api = backend(&cfg)?;
    let n = syn.len();
    let more = engine::generate_more(&Population::new(syn.samples, 0), multiplier, api.as_ref(), &degree, cfg.engine.seed)?;
    if more.len() != n * multiplier {
        return Err(CliError::Core(pe_core::PeError::SizeMismatch(format!(
            "backend returned {} samples, expected {}",
            more.len(),
            n * multiplier
        ))));
    }
    ensure_parent(out)?;
    save_dataset(&more.clone().into_dataset()?, out, Format::from_path(out))?;
    Ok(GenerateMoreSummary {
        input_samples: n,
        multiplier,
        output_samples: more.len(),
        output: out.to_path_buf(),
        notice: "privacy cost unchanged: no private data was read".into(),
    })
}

pub fn cmd_intrinsic_dim(path: &Path, threshold: f64) -> Result<usize, CliError> {
    let d = load_dataset(path, Format::from_path(path))?;
    Ok(metrics::intrinsic_dimension(&points(&d), threshold)?)
}

/// Writes a theory world (support drawn uniformly in the ball, each point
/// repeated `multiplicity` times).
pub fn cmd_world(spec: &TrialSpec, seed: u64, out: &Path) -> Result<usize, CliError> {
    let world = spec.world(seed)?;
    let d = theory::build_world(&world)?;
    ensure_parent(out)?;
    save_dataset(&d, out, Format::from_path(out))?;
    Ok(d.len())
}

/// `name:n_priv:n_syn:dim:repetitions[:workers]`.
pub fn parse_bench_case(s: &str) -> Result<BenchCase, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> Result<usize, CliError> {
        parts[i]
            .parse()
            .map_err(|_| CliError::Usage(format!("bench case '{s}': '{}' is not a count", parts[i])))
    };
    if !(5..=6).contains(&parts.len()) {
        return Err(CliError::Usage(format!(
            "bench case '{s}' must look like name:n_priv:n_syn:dim:reps[:workers]"
        )));
    }
    let mut c = BenchCase::new(parts[0], num(1)?, num(2)?, num(3)?, num(4)?);
    if parts.len() == 6 {
        c.workers = num(5)?;
    }
    c.validate()?;
    Ok(c)
}

pub fn cmd_bench(cases: &[BenchCase], out_dir: &Path, seed: u64) -> Result<Vec<BenchReport>, CliError> {
    let mut reports = Vec::new();
    for c in cases {
        for r in [
            bench::bench_voting(c, seed)?,
            bench::bench_matching(c, seed)?,
            bench::bench_variation(c, seed)?,
        ] {
            r.save_json(out_dir)?;
            reports.push(r);
        }
    }
    Ok(reports)
}
