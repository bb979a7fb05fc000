//! Run configuration file.
//!
//! ```toml
//! [data]
//! path = "private.csv"
//!
//! [world]
//! dimension = 2
//! diameter = 1.0
//!
//! [engine]
//! n_syn = 200
//! iterations = 10
//! seed = 7
//!
//! [privacy]
//! sigma = 5.0
//! threshold = 2.0
//! delta = 1e-5
//!
//! [api]
//! backend = "simulated"
//! degree_schedule = [0.05]
//!
//! [output]
//! trace = "out/trace.jsonl"
//! dataset = "out/synthetic.csv"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.
//! Only `[api].endpoint` and the `[output]` paths may be overridden from the
//! environment.

use std::path::{Path, PathBuf};

use pe_core::accountant;
use pe_core::embedding::EmbedderSpec;
use pe_core::engine::{EngineConfig, Offspring, ParentSelection, TraceMetrics};
use pe_core::genapi::{Degree, DegreeSchedule, LogBase};
use pe_core::voting::VotingConfig;
use pe_core::{BallWorld, Format};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const ENV_ENDPOINT: &str = "PE_API_ENDPOINT";
pub const ENV_TRACE: &str = "PE_OUTPUT_TRACE";
pub const ENV_DATASET: &str = "PE_OUTPUT_DATASET";
pub const ENV_SUMMARY: &str = "PE_OUTPUT_SUMMARY";
pub const ENV_INTERMEDIATE: &str = "PE_OUTPUT_INTERMEDIATE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub world: WorldSection,
    pub engine: EngineSection,
    pub privacy: PrivacySection,
    pub api: ApiSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    /// `csv` or `binary`; inferred from the extension when absent.
    #[serde(default)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub dimension: usize,
    #[serde(default = "one")]
    pub diameter: f64,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub n_syn: usize,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub retain_parents: bool,
    #[serde(default)]
    pub conditional: bool,
    #[serde(default)]
    pub parent_selection: ParentSelection,
    /// Variations per parent; ignored with `multi_scale`.
    #[serde(default = "one_usize")]
    pub offspring_per_parent: usize,
    #[serde(default)]
    pub multi_scale: bool,
    #[serde(default)]
    pub stop_at_coverage: Option<f64>,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacySection {
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// `H`.
    #[serde(default)]
    pub threshold: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Simulated,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiSection {
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// One entry per iteration; a single entry is repeated.
    #[serde(default)]
    pub degree_schedule: Vec<Degree>,
    #[serde(default)]
    pub lookahead_k: usize,
    /// `L` for multi-scale offspring.
    #[serde(default = "four")]
    pub variations_per_scale: usize,
    #[serde(default = "eta")]
    pub eta: f64,
    #[serde(default = "yes")]
    pub clip: bool,
    #[serde(default)]
    pub log_base: LogBase,
    #[serde(default = "identity")]
    pub embedder: EmbedderSpec,
}

fn four() -> usize {
    4
}
fn eta() -> f64 {
    0.05
}
fn yes() -> bool {
    true
}
fn identity() -> EmbedderSpec {
    EmbedderSpec::Identity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub trace: PathBuf,
    pub dataset: PathBuf,
    #[serde(default)]
    pub summary: Option<PathBuf>,
    #[serde(default)]
    pub persist_intermediate: bool,
    #[serde(default)]
    pub intermediate_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, applies environment overrides, resolves paths and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(v) = lookup(ENV_ENDPOINT) {
            self.api.endpoint = Some(v);
        }
        if let Some(v) = lookup(ENV_TRACE) {
            self.output.trace = v.into();
        }
        if let Some(v) = lookup(ENV_DATASET) {
            self.output.dataset = v.into();
        }
        if let Some(v) = lookup(ENV_SUMMARY) {
            self.output.summary = Some(v.into());
        }
        if let Some(v) = lookup(ENV_INTERMEDIATE) {
            self.output.intermediate_dir = Some(v.into());
        }
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.path);
        fix(&mut self.output.trace);
        fix(&mut self.output.dataset);
        if let Some(p) = self.output.summary.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output.intermediate_dir.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: String| Err(CliError::Field { field: field.into(), message: msg });
        match (self.privacy.sigma, self.privacy.epsilon) {
            (Some(_), Some(_)) => {
                return bad(
                    "privacy.sigma, privacy.epsilon",
                    "give exactly one of privacy.sigma and privacy.epsilon, not both".into(),
                )
            }
            (None, None) => {
                return bad(
                    "privacy.sigma, privacy.epsilon",
                    "one of privacy.sigma and privacy.epsilon is required".into(),
                )
            }
            (Some(s), None) if !(s >= 0.0 && s.is_finite()) => {
                return bad("privacy.sigma", format!("must be a finite value >= 0, got {s}"))
            }
            (None, Some(e)) if !(e > 0.0 && e.is_finite()) => {
                return bad("privacy.epsilon", format!("must be > 0, got {e}"))
            }
            _ => {}
        }
        if !(self.privacy.delta > 0.0 && self.privacy.delta < 1.0) {
            return bad("privacy.delta", format!("must lie in (0, 1), got {}", self.privacy.delta));
        }
        if !(self.privacy.threshold >= 0.0 && self.privacy.threshold.is_finite()) {
            return bad("privacy.threshold", format!("must be >= 0, got {}", self.privacy.threshold));
        }
        if self.engine.n_syn == 0 {
            return bad("engine.n_syn", "must be >= 1".into());
        }
        if self.privacy.epsilon.is_some() && self.engine.iterations == 0 {
            return bad("engine.iterations", "must be >= 1 when privacy.epsilon is given".into());
        }
        if self.engine.offspring_per_parent == 0 {
            return bad("engine.offspring_per_parent", "must be >= 1".into());
        }
        if self.world.dimension == 0 {
            return bad("world.dimension", "must be >= 1".into());
        }
        if !(self.world.diameter > 0.0 && self.world.diameter.is_finite()) {
            return bad("world.diameter", format!("must be > 0, got {}", self.world.diameter));
        }
        if let Some(c) = &self.world.center {
            if c.len() != self.world.dimension {
                return bad(
                    "world.center",
                    format!("has {} coordinates, world.dimension is {}", c.len(), self.world.dimension),
                );
            }
        }
        if let Some(f) = &self.data.format {
            if f.parse::<Format>().is_err() {
                return bad("data.format", format!("unknown format '{f}' (use csv or binary)"));
            }
        }
        if !self.data.path.is_file() {
            return bad("data.path", format!("{} does not exist", self.data.path.display()));
        }
        if self.api.backend == BackendKind::Http && self.api.endpoint.is_none() {
            return bad("api.endpoint", format!("required for the http backend (or set {ENV_ENDPOINT})"));
        }
        let needs_schedule = self.api.lookahead_k > 0 || !self.engine.multi_scale;
        if needs_schedule && self.engine.iterations > 0 && self.api.degree_schedule.is_empty() {
            return bad("api.degree_schedule", "must list at least one degree".into());
        }
        if self.api.degree_schedule.len() > 1 && self.api.degree_schedule.len() < self.engine.iterations {
            return bad(
                "api.degree_schedule",
                format!(
                    "has {} entries for {} iterations (give one entry or one per iteration)",
                    self.api.degree_schedule.len(),
                    self.engine.iterations
                ),
            );
        }
        if self.api.variations_per_scale == 0 {
            return bad("api.variations_per_scale", "must be >= 1".into());
        }
        if !(self.api.eta > 0.0) {
            return bad("api.eta", format!("must be > 0, got {}", self.api.eta));
        }
        if self.output.persist_intermediate && self.output.intermediate_dir.is_none() {
            return bad("output.intermediate_dir", "required when output.persist_intermediate is set".into());
        }
        Ok(())
    }

    pub fn data_format(&self) -> Format {
        self.data
            .format
            .as_deref()
            .and_then(|f| f.parse().ok())
            .unwrap_or_else(|| Format::from_path(&self.data.path))
    }

    pub fn ball(&self) -> Result<BallWorld, CliError> {
        let center = self.world.center.clone().unwrap_or_else(|| vec![0.0; self.world.dimension]);
        Ok(BallWorld::new(center, self.world.diameter)?)
    }

    /// Per-iteration σ: given directly or derived from the (ε, δ) budget.
    pub fn sigma(&self) -> Result<f64, CliError> {
        match (self.privacy.sigma, self.privacy.epsilon) {
            (Some(s), _) => Ok(s),
            (None, Some(e)) => Ok(accountant::sigma_for_budget(e, self.privacy.delta, self.engine.iterations)?),
            (None, None) => Err(CliError::Field {
                field: "privacy.sigma".into(),
                message: "missing".into(),
            }),
        }
    }

    pub fn schedule(&self) -> DegreeSchedule {
        match self.api.degree_schedule.as_slice() {
            [single] => DegreeSchedule::constant(*single, self.engine.iterations.max(1)),
            many => DegreeSchedule(many.to_vec()),
        }
    }

    pub fn engine_config(&self) -> Result<EngineConfig, CliError> {
        let voting = VotingConfig::new(self.sigma()?, self.privacy.threshold, self.api.lookahead_k)?;
        let mut cfg = EngineConfig::new(self.engine.n_syn, self.engine.iterations, voting, self.engine.seed);
        cfg.delta = self.privacy.delta;
        cfg.degree_schedule = self.schedule();
        cfg.retain_parents = self.engine.retain_parents;
        cfg.conditional = self.engine.conditional;
        cfg.parent_selection = self.engine.parent_selection;
        cfg.offspring = if self.engine.multi_scale {
            Offspring::MultiScale
        } else {
            Offspring::PerParent(self.engine.offspring_per_parent)
        };
        cfg.stop_at_coverage = self.engine.stop_at_coverage;
        cfg.trace_metrics = TraceMetrics::default();
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[data]
path = "private.csv"
[world]
dimension = 2
[engine]
n_syn = 10
iterations = 3
seed = 1
[privacy]
sigma = 1.0
delta = 1e-5
[api]
degree_schedule = [0.05]
[output]
trace = "trace.jsonl"
dataset = "syn.csv"
"#;

    #[test]
    fn parses_minimal() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.engine.n_syn, 10);
        assert_eq!(c.api.backend, BackendKind::Simulated);
        assert_eq!(c.schedule().len(), 3);
    }

    #[test]
    fn both_sigma_and_epsilon_names_both_fields() {
        let text = MINIMAL.replace("sigma = 1.0", "sigma = 1.0\nepsilon = 2.0");
        let err = RunConfig::parse(&text).unwrap().validate().unwrap_err().to_string();
        assert!(err.contains("privacy.sigma") && err.contains("privacy.epsilon"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = MINIMAL.replace("seed = 1", "seed = 1\nsed = 2");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn env_overrides_only_endpoint_and_outputs() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.apply_env(|k| match k {
            ENV_ENDPOINT => Some("http://x".into()),
            ENV_TRACE => Some("/tmp/t.jsonl".into()),
            _ => None,
        });
        assert_eq!(c.api.endpoint.as_deref(), Some("http://x"));
        assert_eq!(c.output.trace, PathBuf::from("/tmp/t.jsonl"));
        assert_eq!(c.output.dataset, PathBuf::from("syn.csv"));
    }

    #[test]
    fn epsilon_derives_sigma() {
        let text = MINIMAL.replace("sigma = 1.0", "epsilon = 1.0");
        let c = RunConfig::parse(&text).unwrap();
        let s = c.sigma().unwrap();
        assert_eq!(s, accountant::sigma_for_budget(1.0, 1e-5, 3).unwrap());
    }
}
