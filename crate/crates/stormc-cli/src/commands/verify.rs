//! `stormc verify`: pinned-seed verification suites over the diagnostics
//! layer. Exit 3 when any check fails.

use stormc_core::diagnostics::{assert_runtime_bounds, check_corollary_a1, check_theorem_bound};
use stormc_core::planner::ErrorBudget;
use stormc_core::problems::{Portfolio, QuadToy, Sne, ValueEval};
use stormc_core::{
    run_scgd, run_storm_c, CompositionalProblem, EvalMode, HyperParams, InitBatches,
    MomentumWeights, OutputRule, RandomSource, RunOptions, ScgdParams, StepBatches,
};

use crate::{CliError, CliResult};

/// Verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    /// Structural runtime invariants: exact full-information tracking, step
    /// and accounting bounds on every problem, determinism.
    Invariants,
    /// Statistical error bounds: tracking-error sums and the stationarity
    /// guarantee on the toy problem with analytic constants.
    Bounds,
    /// Both suites.
    All,
}

type Check = (&'static str, fn() -> Result<String, String>);

const INVARIANT_CHECKS: &[Check] = &[
    ("full-information tracking (quad-toy)", full_information_tracking),
    ("runtime bounds on every problem", runtime_bounds_all_problems),
    ("baseline runtime bounds (portfolio)", scgd_runtime_bounds),
    ("seeded determinism", determinism),
];

const BOUND_CHECKS: &[Check] = &[
    ("tracking-error bounds (quad-toy)", tracking_error_bounds),
    ("stationarity bound (quad-toy)", stationarity_bound),
];

/// Runs the selected suite, printing one PASS/FAIL line per check.
pub fn cmd_verify(suite: Suite) -> CliResult<()> {
    let checks: Vec<&Check> = match suite {
        Suite::Invariants => INVARIANT_CHECKS.iter().collect(),
        Suite::Bounds => BOUND_CHECKS.iter().collect(),
        Suite::All => INVARIANT_CHECKS.iter().chain(BOUND_CHECKS).collect(),
    };
    let mut failures = 0usize;
    for (name, check) in &checks {
        match check() {
            Ok(detail) => println!("PASS {name} — {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name} — {detail}");
            }
        }
    }
    if failures == 0 {
        println!("{} checks passed", checks.len());
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "{failures} of {} checks failed",
            checks.len()
        )))
    }
}

fn quad_toy_hyper(t_iters: u64) -> HyperParams {
    HyperParams {
        eta: 1.0,
        eps: 0.1,
        weights: MomentumWeights {
            a_g: 0.1,
            a_jac: 0.1,
            a_f: 0.2,
        },
        init: InitBatches::uniform(4),
        steps: StepBatches::uniform(4),
        t_iters,
    }
}

/// In full-information mode every estimate must stay numerically equal to
/// its exact counterpart; the squared estimation errors measure exactly that
/// deviation.
fn full_information_tracking() -> Result<String, String> {
    let problem = QuadToy::new();
    let options = RunOptions {
        cadence: Some(1),
        mode: EvalMode::FullInformation,
        constants: Some(problem.constants()),
        estimation_errors: true,
        ..RunOptions::default()
    };
    let record = run_storm_c(&problem, &quad_toy_hyper(120), 0, None, &options)
        .map_err(|e| e.to_string())?;
    if !record.violations.is_empty() {
        return Err(format!("violations: {}", record.violations.join("; ")));
    }
    let worst = record
        .diagnostic_rows()
        .flat_map(|r| [r.est_err_f, r.est_err_g, r.est_err_jac])
        .flatten()
        .fold(0.0_f64, f64::max)
        .sqrt();
    if worst <= 1e-9 {
        Ok(format!("worst estimate deviation {worst:.3e} over 120 iterations"))
    } else {
        Err(format!("estimate deviated by {worst:.3e} (allowed 1e-9)"))
    }
}

fn runtime_bounds_one(
    problem: &dyn CompositionalProblem,
    hyper: &HyperParams,
    options: &RunOptions,
) -> Result<(), String> {
    let record =
        run_storm_c(problem, hyper, 7, None, options).map_err(|e| e.to_string())?;
    let violations = assert_runtime_bounds(&record);
    if !violations.is_empty() {
        return Err(format!("{}: {}", problem.name(), violations.join("; ")));
    }
    if record.ifo_total != hyper.ifo_total() {
        return Err(format!(
            "{}: spent {} oracle calls, planned {}",
            problem.name(),
            record.ifo_total,
            hyper.ifo_total()
        ));
    }
    Ok(())
}

/// Step-cap, clipping-range, and oracle-accounting assertions on pinned runs
/// of all four problems.
fn runtime_bounds_all_problems() -> Result<String, String> {
    let quad = QuadToy::new();
    let options = RunOptions {
        constants: Some(quad.constants()),
        estimation_errors: false,
        ..RunOptions::default()
    };
    runtime_bounds_one(&quad, &quad_toy_hyper(150), &options)?;

    let plain = RunOptions {
        estimation_errors: false,
        ..RunOptions::default()
    };
    let small = |eta: f64, a: f64, batch: usize, t_iters: u64| HyperParams {
        eta,
        eps: 0.1,
        weights: MomentumWeights::uniform(a),
        init: InitBatches::uniform(batch),
        steps: StepBatches::uniform(batch),
        t_iters,
    };
    let mut rng = RandomSource::from_seed(0);
    let portfolio = Portfolio::generate(60, 8, 4.0, &mut rng).map_err(|e| e.to_string())?;
    runtime_bounds_one(&portfolio, &small(0.1, 0.01, 20, 150), &plain)?;

    let mut rng = RandomSource::from_seed(1);
    let value = ValueEval::generate(15, 4, 40, &mut rng).map_err(|e| e.to_string())?;
    runtime_bounds_one(&value, &small(0.1, 0.05, 10, 100), &plain)?;

    let mut rng = RandomSource::from_seed(2);
    let sne = Sne::generate(12, 2, &mut rng).map_err(|e| e.to_string())?;
    runtime_bounds_one(&sne, &small(0.05, 0.05, 10, 80), &plain)?;

    Ok("4 problems, zero violations, oracle accounting exact".into())
}

/// The baseline goes through the same assertion layer.
fn scgd_runtime_bounds() -> Result<String, String> {
    let mut rng = RandomSource::from_seed(0);
    let portfolio = Portfolio::generate(60, 8, 4.0, &mut rng).map_err(|e| e.to_string())?;
    let params = ScgdParams {
        alpha0: 0.1,
        alpha_decay: 0.75,
        beta0: 1.0,
        beta_decay: 0.5,
        steps: StepBatches::uniform(20),
        t_iters: 150,
    };
    let options = RunOptions {
        estimation_errors: false,
        ..RunOptions::default()
    };
    let record = run_scgd(&portfolio, &params, 3, None, &options).map_err(|e| e.to_string())?;
    let violations = assert_runtime_bounds(&record);
    if violations.is_empty() {
        Ok("zero violations".into())
    } else {
        Err(violations.join("; "))
    }
}

/// Bitwise-identical replay of the same seed, for both algorithms.
fn determinism() -> Result<String, String> {
    let problem = QuadToy::new();
    let options = RunOptions {
        estimation_errors: false,
        ..RunOptions::default()
    };
    let hyper = quad_toy_hyper(100);
    let first = run_storm_c(&problem, &hyper, 42, None, &options).map_err(|e| e.to_string())?;
    let second = run_storm_c(&problem, &hyper, 42, None, &options).map_err(|e| e.to_string())?;
    if first != second {
        return Err("storm-c replay diverged".into());
    }
    let params = ScgdParams {
        alpha0: 0.5,
        alpha_decay: 0.75,
        beta0: 1.0,
        beta_decay: 0.5,
        steps: StepBatches::uniform(4),
        t_iters: 100,
    };
    let first = run_scgd(&problem, &params, 42, None, &options).map_err(|e| e.to_string())?;
    let second = run_scgd(&problem, &params, 42, None, &options).map_err(|e| e.to_string())?;
    if first != second {
        return Err("scgd replay diverged".into());
    }
    Ok("identical records on replay".into())
}

/// Seed-averaged inner-value and Jacobian tracking-error sums against their
/// closed-form bounds.
fn tracking_error_bounds() -> Result<String, String> {
    let problem = QuadToy::new();
    let constants = problem.constants();
    let hyper = HyperParams {
        eta: 1.0 / constants.l_phi(),
        eps: 0.1,
        weights: MomentumWeights {
            a_g: 0.1,
            a_jac: 0.1,
            a_f: 0.2,
        },
        init: InitBatches::uniform(4),
        steps: StepBatches::uniform(4),
        t_iters: 30,
    };
    let (g_report, jac_report) =
        check_corollary_a1(&problem, &constants, &hyper, 12).map_err(|e| e.to_string())?;
    let detail = format!(
        "inner-value {:.3e} <= {:.3e}, jacobian {:.3e} <= {:.3e} (12 seeds)",
        g_report.lhs_mean, g_report.rhs, jac_report.lhs_mean, jac_report.rhs
    );
    if g_report.passes && jac_report.passes {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Measured gradient norm at uniformly selected output iterates against the
/// stationarity guarantee.
fn stationarity_bound() -> Result<String, String> {
    let problem = QuadToy::new();
    let constants = problem.constants();
    let hyper = HyperParams {
        eta: 0.5,
        eps: 0.1,
        weights: MomentumWeights::uniform(0.2),
        init: InitBatches::uniform(8),
        steps: StepBatches::uniform(8),
        t_iters: 40,
    };
    let options = RunOptions {
        output_rule: OutputRule::UniformRandom,
        estimation_errors: false,
        ..RunOptions::default()
    };
    let runs: Vec<_> = (0..5)
        .map(|seed| run_storm_c(&problem, &hyper, seed, None, &options))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let report = check_theorem_bound(&problem, &runs, &constants, hyper.eps, ErrorBudget::default())
        .map_err(|e| e.to_string())?;
    let detail = format!(
        "gradient norm {:.3e} <= {:.3e} (5 seeds)",
        report.lhs_mean, report.rhs
    );
    if report.passes {
        Ok(detail)
    } else {
        Err(detail)
    }
}
