use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pe_cli::*;
use pe_core::accountant;

fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

fn private_csv(dir: &Path) -> PathBuf {
    let p = dir.join("private.csv");
    let mut s = String::new();
    for i in 0..30 {
        let a = i as f64 * 0.2;
        s.push_str(&format!("{:?},{:?}\n", 0.3 * a.cos(), 0.3 * a.sin()));
    }
    write(&p, &s);
    p
}

fn config(dir: &Path, privacy: &str) -> PathBuf {
    private_csv(dir);
    let p = dir.join("run.toml");
    write(
        &p,
        &format!(
            r#"
[data]
path = "private.csv"
[world]
dimension = 2
[engine]
n_syn = 24
iterations = 4
seed = 5
[privacy]
{privacy}
threshold = 0.5
delta = 1e-5
[api]
degree_schedule = [0.05, 0.04, 0.03, 0.02]
[output]
trace = "out/trace.jsonl"
dataset = "out/syn.csv"
summary = "out/summary.json"
"#
        ),
    );
    p
}

#[test]
fn run_writes_trace_dataset_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sigma = 2.0");
    let s = cmd_run(&cfg).unwrap();
    let records = read_trace(&s.trace).unwrap();
    assert_eq!(records.len(), 4);
    let rows = fs::read_to_string(&s.dataset).unwrap().lines().count();
    assert_eq!(rows, 24);
    // The summary's ε is the accountant's value for (σ, T, δ).
    let offline = accountant::epsilon_after(s.sigma, records.len(), s.delta).unwrap();
    assert_eq!(s.epsilon.unwrap().to_bits(), offline.to_bits());
    assert_eq!(records.last().unwrap().epsilon, s.epsilon);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(json["epsilon"].as_f64().unwrap().to_bits(), offline.to_bits());
    assert_eq!(json["seed"], 5);
}

#[test]
fn epsilon_budget_is_met() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "epsilon = 3.0");
    let s = cmd_run(&cfg).unwrap();
    assert!((s.epsilon.unwrap() - 3.0).abs() < 1e-6, "{:?}", s.epsilon);
}

#[test]
fn sigma_and_epsilon_together_is_a_field_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sigma = 2.0\nepsilon = 1.0");
    let err = cmd_run(&cfg).unwrap_err().to_string();
    assert!(err.contains("privacy.sigma") && err.contains("privacy.epsilon"), "{err}");
}

#[test]
fn missing_data_file_fails_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sigma = 2.0");
    fs::remove_file(dir.path().join("private.csv")).unwrap();
    // An http backend on a closed port would fail on first use; the data
    // check must come first.
    let text = fs::read_to_string(&cfg).unwrap().replace("[api]", "[api]\nbackend = \"http\"\nendpoint = \"http://127.0.0.1:9\"");
    fs::write(&cfg, text).unwrap();
    let err = cmd_run(&cfg).unwrap_err().to_string();
    assert!(err.contains("data.path"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn env_overrides_output_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = config(dir.path(), "sigma = 2.0");
    let mut cfg = RunConfig::parse(&fs::read_to_string(&cfg_path).unwrap()).unwrap();
    let alt = dir.path().join("elsewhere.jsonl");
    let alt_s = alt.to_string_lossy().to_string();
    cfg.apply_env(|k| (k == config::ENV_TRACE).then(|| alt_s.clone()));
    assert_eq!(cfg.output.trace, alt);
}

#[test]
fn accountant_reports() {
    let r = cmd_accountant(Some(10.0 * 2f64.sqrt()), None, 1e-5, 5).unwrap();
    assert!((r.effective_sigma - 6.324555).abs() < 1e-6);
    assert!(r.epsilon > 0.0 && r.epsilon <= 0.72);
    let r = cmd_accountant(None, Some(1.0), 1e-5, 1).unwrap();
    assert!((accountant::epsilon_after(r.sigma, 1, 1e-5).unwrap() - 1.0).abs() < 1e-6);
    assert!(matches!(cmd_accountant(Some(1.0), Some(1.0), 1e-5, 1), Err(CliError::Usage(_))));
}

fn csv_points(dir: &Path, name: &str, pts: &[Vec<f64>]) -> PathBuf {
    let p = dir.join(name);
    let text: String = pts
        .iter()
        .map(|r| r.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    write(&p, &text);
    p
}

#[test]
fn metrics_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = csv_points(dir.path(), "a.csv", &[vec![0.0], vec![1.0]]);
    let b = csv_points(dir.path(), "b.csv", &[vec![0.5], vec![0.5]]);
    let r = cmd_metrics(&a, &b, MetricsOptions::default()).unwrap();
    assert!((r.w1 - 0.5).abs() < 1e-15);
    assert_eq!(r.w1_method, "assignment");

    let same = cmd_metrics(&a, &a, MetricsOptions::default()).unwrap();
    assert_eq!(same.w1, 0.0);
    assert_eq!(same.coverage_a_to_b, 0.0);
    assert_eq!(same.coverage_b_to_a, 0.0);
    assert!(same.frechet.unwrap().abs() < 1e-12);

    let big: Vec<Vec<f64>> = (0..257).map(|i| vec![i as f64]).collect();
    let c = csv_points(dir.path(), "c.csv", &big);
    let opts = MetricsOptions { exact: true, ..MetricsOptions::default() };
    let err = cmd_metrics(&c, &c, opts).unwrap_err().to_string();
    assert!(err.contains("--cap"), "{err}");
    assert_eq!(cmd_metrics(&c, &c, MetricsOptions::default()).unwrap().w1_method, "transport");
}

#[test]
fn theory_smoke_and_bad_axis() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("smoke.toml");
    write(&spec, "axis = \"L\"\nvalues = [8]\ntrials = 1\n[base]\niterations = 10\nstop_at_eta = true\n");
    let o = cmd_theory(&spec, None).unwrap();
    assert_eq!(fs::read_to_string(&o.csv).unwrap().lines().count(), 2);

    write(&spec, "axis = \"speed\"\nvalues = [1]\n");
    let err = cmd_theory(&spec, None).unwrap_err().to_string();
    assert!(err.contains("lookahead_k") && err.contains("N_syn"), "{err}");
}

#[test]
fn generate_more_multiplies_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sigma = 2.0");
    let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 200.0, 0.0]).collect();
    let syn = csv_points(dir.path(), "syn.csv", &pts);
    let out = dir.path().join("more.csv");
    let s = cmd_generate_more(&syn, 2, &cfg, &out, None).unwrap();
    assert_eq!(s.output_samples, 100);
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 100);
    assert!(matches!(cmd_generate_more(&syn, 0, &cfg, &out, None), Err(CliError::Usage(_))));
}

#[test]
fn intrinsic_dim_and_world() {
    let dir = tempfile::tempdir().unwrap();
    let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
    let p = csv_points(dir.path(), "v.csv", &pts);
    assert_eq!(cmd_intrinsic_dim(&p, 0.8).unwrap(), 1);
    let spec = pe_core::theory::TrialSpec { multiplicity: Some(3), support_size: 4, ..Default::default() };
    assert_eq!(cmd_world(&spec, 1, &dir.path().join("w.csv")).unwrap(), 12);
}

#[test]
fn bench_cases_parse_and_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = parse_bench_case("t:5:7:3:1:2").unwrap();
    assert_eq!(c.workers, 2);
    assert!(parse_bench_case("t:5:7").is_err());
    let reports = cmd_bench(&[c], dir.path(), 0).unwrap();
    assert!(reports.iter().all(|r| r.outputs_match));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 3);
}

#[test]
fn binary_exit_codes() {
    let pe = env!("CARGO_BIN_EXE_pe");
    let ok = Command::new(pe).args(["accountant", "--sigma", "14.142135", "--T", "5", "--delta", "1e-5"]).output().unwrap();
    assert!(ok.status.success());
    let v: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!((v["effective_sigma"].as_f64().unwrap() - 6.324555).abs() < 1e-6);

    let bad = Command::new(pe).args(["accountant", "--sigma", "1", "--epsilon", "1"]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "sigma = 2.0");
    let run = Command::new(pe).args(["--workers", "2", "run"]).arg(&cfg).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("epsilon"));
}
