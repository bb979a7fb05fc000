use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pe_cli::*;
use pe_core::genapi::Degree;
use pe_core::metrics::DEFAULT_EXACT_CAP;
use pe_core::theory::TrialSpec;

#[derive(Parser)]
#[command(name = "pe", version, about = "Differentially private synthetic data by Private Evolution")]
struct Cli {
    /// Worker threads (outputs do not depend on this).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolution loop described by a config file.
    Run { config: PathBuf },
    /// Convert between noise level and privacy budget.
    Accountant {
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        /// Number of iterations.
        #[arg(long = "T", visible_alias = "iterations", default_value_t = 1)]
        t: usize,
    },
    /// Compare two datasets.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        /// Force the assignment solver (equal sizes, at most --cap points).
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
        cap: usize,
    },
    /// Run a theory sweep spec and write its CSV report.
    Theory {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expand a synthetic dataset by variation, at no privacy cost.
    GenerateMore {
        dataset: PathBuf,
        #[arg(long)]
        multiplier: usize,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Degree as JSON, e.g. 0.05, 3 or "identity".
        #[arg(long)]
        degree: Option<String>,
    },
    /// Intrinsic dimension of a file of variations.
    IntrinsicDim {
        path: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
    },
    /// Write a bounded-ball theory world as a dataset.
    World {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        diameter: f64,
        #[arg(long, default_value_t = 10)]
        support: usize,
        #[arg(long, default_value_t = 1)]
        multiplicity: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the voting, matching and variation kernels.
    Bench {
        /// name:n_priv:n_syn:dim:reps[:workers]; repeatable.
        #[arg(long = "case")]
        cases: Vec<String>,
        #[arg(long, default_value = "benchmarks")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

// Like println!, but a closed pipe (e.g. `| head`) is not a panic.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config } => {
            let s = cmd_run(&config)?;
            out!("{s}");
        }
        Command::Accountant { sigma, epsilon, delta, t } => {
            out!("{}", json(&cmd_accountant(sigma, epsilon, delta, t)?));
        }
        Command::Metrics { a, b, exact, cap } => {
            out!("{}", json(&cmd_metrics(&a, &b, MetricsOptions { exact, cap })?));
        }
        Command::Theory { spec, out } => {
            let o = cmd_theory(&spec, out.as_deref())?;
            for s in &o.report.summaries {
                out!(
                    "{} = {}: converged {:.2}, median iters {}, mean coverage {:.5}, mean W1 {:.5}",
                    o.report.axis, s.value, s.converged_fraction, s.median_iters, s.mean_coverage, s.mean_w1
                );
            }
            for c in &o.report.checks {
                out!("{} {:?}: {}", if c.passed { "PASS" } else { "FAIL" }, c.check, c.detail);
            }
            out!("csv {}", o.csv.display());
            let failed = o.report.checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
        Command::GenerateMore { dataset, multiplier, config, out, degree } => {
            let degree = degree
                .map(|d| serde_json::from_str::<Degree>(&d))
                .transpose()
                .map_err(|e| CliError::Usage(format!("--degree: {e}")))?;
            let s = cmd_generate_more(&dataset, multiplier, &config, &out, degree)?;
            out!("{}", json(&s));
            eprintln!("{}", s.notice);
        }
        Command::IntrinsicDim { path, threshold } => {
            out!("{}", cmd_intrinsic_dim(&path, threshold)?);
        }
        Command::World { dim, diameter, support, multiplicity, seed, out } => {
            let spec = TrialSpec {
                dim,
                diameter,
                support_size: support,
                multiplicity: Some(multiplicity),
                ..TrialSpec::default()
            };
            let n = cmd_world(&spec, seed, &out)?;
            out!("wrote {n} samples to {}", out.display());
        }
        Command::Bench { cases, out, seed } => {
            let cases = if cases.is_empty() {
                vec!["tiny:1:1:1:1".to_string(), "small:2000:2000:16:3".to_string()]
            } else {
                cases
            };
            let cases = cases.iter().map(|c| parse_bench_case(c)).collect::<Result<Vec<_>, _>>()?;
            for r in cmd_bench(&cases, &out, seed)? {
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                out!(
                    "{:<10} {:<10} parallel {:.4}s serial {:.4}s match {}",
                    r.case.name,
                    r.kernel,
                    mean(&r.parallel_secs),
                    mean(&r.serial_secs),
                    r.outputs_match
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers;
    match with_workers(workers, || dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
