//! Integration tests of the command surface: schema strictness, CSV output,
//! plan resolution, exit codes, overrides, and determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use nalgebra::{DMatrix, DVector};
use stormc_cli::commands::{cmd_bench, cmd_run};
use stormc_cli::config::{load_config, resolve_experiment, Algorithm};
use stormc_cli::CliError;
use stormc_core::problems::QuadToy;
use stormc_core::{CompositionalProblem, InnerValue, Jacobian, Point, Result as CoreResult};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stormc"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// A small quad-toy run: T=50 at batch size 4.
fn quad_small(out_dir: &Path, t_iters: u64) -> String {
    format!(
        r#"
out_dir = "{}"
seeds = [0]
algorithms = ["storm-c"]

[problem]
kind = "quad-toy"

[plan]
mode = "explicit"
eps = 0.1
eta = 1.0
a = 0.1
s = 4
b = 4
t_iters = {t_iters}
"#,
        out_dir.display()
    )
}

const UNIT_CONSTANTS_PLAN: &str = r#"
algorithms = ["storm-c"]

[problem]
kind = "quad-toy"

[constants]
delta = 1.0
l_f = 1.0
l_g = 1.0
m_f = 1.0
m_g = 1.0
h1 = 1.0
h2 = 1.0
h3 = 1.0
l_phi = 1.0

[plan]
mode = "exact"
eps = 0.1
"#;

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn unknown_keys_are_rejected_with_the_offending_key() {
    let dir = tempfile::tempdir().unwrap();
    let bad_top = write_config(
        dir.path(),
        "bad-top.toml",
        &format!("frobnicate = 1\n{}", quad_small(dir.path(), 5)),
    );
    let err = load_config(&bad_top).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert!(err.to_string().contains("frobnicate"), "{err}");

    let bad_plan = write_config(
        dir.path(),
        "bad-plan.toml",
        &quad_small(dir.path(), 5).replace("t_iters = 5", "t_iters = 5\nstepsize = 0.1"),
    );
    let err = load_config(&bad_plan).unwrap_err();
    assert!(err.to_string().contains("stepsize"), "{err}");
}

#[test]
fn foreign_problem_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "foreign.toml",
        &quad_small(dir.path(), 5).replace("kind = \"quad-toy\"", "kind = \"quad-toy\"\nsamples = 3"),
    );
    let err = load_config(&path)
        .and_then(|c| resolve_experiment(&c, None, None, false))
        .err()
        .expect("foreign key must be rejected");
    assert!(err.to_string().contains("samples"), "{err}");
    assert!(err.to_string().contains("quad-toy"), "{err}");
}

#[test]
fn zero_iteration_run_writes_the_init_row_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = write_config(dir.path(), "t0.toml", &quad_small(&out, 0));
    cmd_run(&path, None, None, false).unwrap();
    let rows = read_rows(&out.join("storm-c-quad-toy-seed0.csv"));
    assert_eq!(rows.len(), 1, "exactly the init row");
    let row = &rows[0];
    assert_eq!(&row[..5], ["storm-c", "quad-toy", "0", "0", "12"]);
    assert_eq!(row[5], "", "no clipping factor without a step");
    assert_eq!(row[7], "", "no displacement without a step");
    assert!(!row[8].is_empty(), "objective gap is known for quad-toy");
}

#[test]
fn rerun_writes_byte_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let path = write_config(dir.path(), "quad.toml", &quad_small(&out_a, 50));
    for out in [&out_a, &out_b, &out_a] {
        let status = bin()
            .args(["run", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = fs::read(out_a.join("storm-c-quad-toy-seed0.csv")).unwrap();
    let b = fs::read(out_b.join("storm-c-quad-toy-seed0.csv")).unwrap();
    assert!(!a.is_empty() && a == b, "reruns must be byte-identical");
}

#[test]
fn plan_json_reproduces_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "plan.toml", UNIT_CONSTANTS_PLAN);
    let output = bin()
        .args(["plan", "--json", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(output.status.success());
    let value: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    let hyper = &value["plan"]["hyper"];
    assert_eq!(hyper["t_iters"], 1067);
    assert_eq!(hyper["steps"]["b_g"], 8640);
    assert_eq!(hyper["steps"]["b_jac"], 8640);
    assert_eq!(hyper["steps"]["b_f"], 85095);
    assert_eq!(hyper["init"]["s_g"], 810);
    assert_eq!(hyper["init"]["s_jac"], 810);
    assert_eq!(hyper["init"]["s_f"], 124);
    assert_eq!(value["projected_ifo"], 109_235_869_u64);
    let lhs = value["condition"]["lhs"].as_f64().unwrap();
    assert!((lhs - 0.074_673_062_237_5).abs() < 1e-9, "lhs = {lhs}");
    assert_eq!(value["condition"]["passes"], false);
}

#[test]
fn infeasible_eps_is_refused_with_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "plan.toml",
        &UNIT_CONSTANTS_PLAN.replace("eps = 0.1", "eps = 0.5"),
    );
    let output = bin().args(["plan", "--config"]).arg(&path).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("infeasible epsilon"), "{stderr}");
}

/// Quad-toy with one outer gradient biased: the finite-difference check must
/// catch it.
struct BiasedGradient(QuadToy);

impl CompositionalProblem for BiasedGradient {
    fn decision_dim(&self) -> usize {
        self.0.decision_dim()
    }
    fn inner_dim(&self) -> usize {
        self.0.inner_dim()
    }
    fn inner_count(&self) -> usize {
        self.0.inner_count()
    }
    fn outer_count(&self) -> usize {
        self.0.outer_count()
    }
    fn inner_value(&self, j: usize, x: &Point) -> CoreResult<InnerValue> {
        self.0.inner_value(j, x)
    }
    fn inner_jacobian(&self, j: usize, x: &Point) -> CoreResult<Jacobian> {
        self.0.inner_jacobian(j, x)
    }
    fn outer_value(&self, i: usize, y: &InnerValue) -> CoreResult<f64> {
        self.0.outer_value(i, y)
    }
    fn outer_gradient(&self, i: usize, y: &InnerValue) -> CoreResult<InnerValue> {
        let mut grad = self.0.outer_gradient(i, y)?;
        grad[0] += 1e-3;
        Ok(grad)
    }
    fn name(&self) -> &str {
        "biased-quad-toy"
    }
}

#[test]
fn corrupted_gradient_fails_the_check_and_tolerance_is_respected() {
    let biased = BiasedGradient(QuadToy::new());
    let points = stormc_cli::commands::perturbed_points(&biased, 10, 0);
    let report = stormc_core::diagnostics::gradcheck(&biased, &points, 1e-6, 1e-5).unwrap();
    assert!(!report.passes, "a biased gradient must fail");
    assert!(report.max_rel_err > 1e-4);

    let ok = bin()
        .args(["gradcheck", "--problem", "quad-toy"])
        .status()
        .unwrap();
    assert!(ok.success());
    let strict = bin()
        .args(["gradcheck", "--problem", "quad-toy", "--tolerance", "1e-15"])
        .output()
        .unwrap();
    assert_eq!(strict.status.code(), Some(3), "exit 3 beyond tolerance");
}

#[test]
fn bench_single_seed_aggregate_equals_raw() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = write_config(
        dir.path(),
        "bench.toml",
        &quad_small(&out, 50).replace("seeds = [0]", "seeds = [7]"),
    );
    cmd_bench(&path, None, None, false).unwrap();
    let raw = read_rows(&out.join("storm-c-quad-toy-seed7.csv"));
    let diag: Vec<&Vec<String>> = raw.iter().filter(|r| !r[9].is_empty()).collect();
    let agg = read_rows(&out.join("aggregate.csv"));
    assert_eq!(agg.len(), diag.len());
    for (bin_row, raw_row) in agg.iter().zip(&diag) {
        assert_eq!(bin_row[1], raw_row[4], "ifo checkpoint");
        // q1 = median = q3 = the raw value for a single seed.
        assert_eq!(bin_row[2], raw_row[8]);
        assert_eq!(bin_row[3], raw_row[8]);
        assert_eq!(bin_row[4], raw_row[8]);
        assert_eq!(bin_row[6], raw_row[9]);
    }
}

#[test]
fn empty_algorithm_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "empty.toml",
        &quad_small(dir.path(), 5).replace("algorithms = [\"storm-c\"]", "algorithms = []"),
    );
    let err = load_config(&path).unwrap_err();
    assert!(err.to_string().contains("algorithms"), "{err}");
}

#[test]
fn out_dir_precedence_is_flag_env_file() {
    let dir = tempfile::tempdir().unwrap();
    let file_out = dir.path().join("from-file");
    let env_out = dir.path().join("from-env");
    let flag_out = dir.path().join("from-flag");
    let path = write_config(dir.path(), "quad.toml", &quad_small(&file_out, 0));
    let csv = "storm-c-quad-toy-seed0.csv";

    assert!(bin().args(["run", "--config"]).arg(&path).status().unwrap().success());
    assert!(file_out.join(csv).exists());

    assert!(bin()
        .args(["run", "--config"])
        .arg(&path)
        .env("STORMC_OUT_DIR", &env_out)
        .status()
        .unwrap()
        .success());
    assert!(env_out.join(csv).exists());

    assert!(bin()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&flag_out)
        .env("STORMC_OUT_DIR", dir.path().join("ignored"))
        .status()
        .unwrap()
        .success());
    assert!(flag_out.join(csv).exists());
    assert!(!dir.path().join("ignored").exists(), "flag beats env");
}

#[test]
fn seed_flag_overrides_the_config_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = write_config(
        dir.path(),
        "quad.toml",
        &quad_small(&out, 0).replace("seeds = [0]", "seeds = [0, 1, 2]"),
    );
    assert!(bin()
        .args(["run", "--seed", "9", "--config"])
        .arg(&path)
        .status()
        .unwrap()
        .success());
    let files: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, vec!["storm-c-quad-toy-seed9.csv"]);
}

#[test]
fn scgd_defaults_are_cost_matched_to_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "both.toml",
        &quad_small(dir.path(), 50)
            .replace("algorithms = [\"storm-c\"]", "algorithms = [\"storm-c\", \"scgd\"]"),
    );
    let config = load_config(&path).unwrap();
    let exp = resolve_experiment(&config, None, None, false).unwrap();
    let scgd = exp.scgd.as_ref().unwrap();
    assert_eq!(scgd.steps, exp.plan.hyper.steps);
    assert_eq!(
        scgd.t_iters,
        exp.plan.ifo_total() / exp.plan.hyper.steps.total()
    );
    assert!(exp.algorithms.contains(&Algorithm::Scgd));
}

#[test]
fn cadence_and_estimation_error_toggles_shape_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = quad_small(&out, 50).replace(
        "algorithms = [\"storm-c\"]",
        "algorithms = [\"storm-c\"]\ncadence = 5\nestimation_errors = true",
    );
    let path = write_config(dir.path(), "diag.toml", &text);
    cmd_run(&path, None, None, false).unwrap();
    let rows = read_rows(&out.join("storm-c-quad-toy-seed0.csv"));
    assert_eq!(rows.len(), 51);
    for row in &rows {
        let t: u64 = row[3].parse().unwrap();
        let due = t % 5 == 0 || t == 50;
        assert_eq!(!row[9].is_empty(), due, "grad_norm at t={t}");
        assert_eq!(!row[10].is_empty(), due, "est_err_f at t={t}");
        assert_eq!(!row[12].is_empty(), due, "est_err_G at t={t}");
    }
}

#[test]
fn portfolio_returns_load_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let returns = DMatrix::from_fn(6, 3, |r, c| 0.1 * (r as f64 + 1.0) - 0.05 * c as f64);
    let mut text = String::new();
    for r in 0..6 {
        let row: Vec<String> = (0..3).map(|c| returns[(r, c)].to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let data = dir.path().join("returns.csv");
    fs::write(&data, text).unwrap();
    let config = format!(
        r#"
algorithms = ["storm-c"]

[problem]
kind = "portfolio"
data = "{}"

[plan]
mode = "explicit"
eps = 0.1
eta = 0.1
a = 0.1
s = 2
b = 2
t_iters = 3
"#,
        data.display()
    );
    let path = write_config(dir.path(), "data.toml", &config);
    let exp = resolve_experiment(&load_config(&path).unwrap(), None, None, false).unwrap();
    assert_eq!(exp.problem.inner_count(), 6);
    assert_eq!(exp.problem.decision_dim(), 3);
    let x = DVector::from_element(3, 0.5);
    let y = exp.problem.inner_value(0, &x).unwrap();
    assert_eq!(y.len(), 4, "inner value is (x, portfolio return)");
}

#[test]
fn run_summary_reports_paths_and_decreasing_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = write_config(dir.path(), "quad.toml", &quad_small(&out, 200));
    let output = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("storm-c-quad-toy-seed0.csv"), "{stdout}");
    let rows = read_rows(&out.join("storm-c-quad-toy-seed0.csv"));
    let first: f64 = rows.first().unwrap()[9].parse().unwrap();
    let last: f64 = rows.last().unwrap()[9].parse().unwrap();
    assert!(
        last < 0.5 * first,
        "gradient norm should decrease ({first} -> {last})"
    );
}
