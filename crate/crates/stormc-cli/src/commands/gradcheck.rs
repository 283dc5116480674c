//! `stormc gradcheck`: finite-difference validation of a problem's oracles.

use std::path::Path;

use stormc_core::diagnostics::{gradcheck, GradCheckReport};
use stormc_core::{CompositionalProblem, Point, RandomSource};

use crate::config::{load_config, ProblemConfig, ProblemKind};
use crate::{CliError, CliResult};

/// Scale of the Gaussian perturbations around the initial point at which
/// gradients are checked. Small enough to stay inside every problem's
/// domain, large enough to leave any symmetry of the initial point.
const PERTURB_SCALE: f64 = 0.2;

/// `count` seeded Gaussian perturbations of the problem's initial point.
pub fn perturbed_points(
    problem: &dyn CompositionalProblem,
    count: usize,
    seed: u64,
) -> Vec<Point> {
    let mut rng = RandomSource::from_seed(seed);
    let x0 = problem.initial_point();
    (0..count)
        .map(|_| {
            let noise =
                Point::from_fn(problem.decision_dim(), |_, _| rng.standard_normal());
            &x0 + PERTURB_SCALE * noise
        })
        .collect()
}

/// Runs the finite-difference check on one problem at seeded points.
pub fn gradcheck_problem(
    problem: &dyn CompositionalProblem,
    points: usize,
    seed: u64,
    step: f64,
    tolerance: f64,
) -> CliResult<GradCheckReport> {
    let points = perturbed_points(problem, points, seed);
    gradcheck(problem, &points, step, tolerance).map_err(CliError::numerical)
}

fn print_report(name: &str, report: &GradCheckReport) {
    println!(
        "{} {name}: max_rel_err={:.3e} (tolerance {:.1e}), fd_agreement={:.3e}, {} points",
        if report.passes { "PASS" } else { "FAIL" },
        report.max_rel_err,
        report.tolerance,
        report.fd_agreement,
        report.per_point.len(),
    );
}

/// Validates analytic gradients of the named (or configured) problem against
/// central differences. Fails with exit 3 when the error exceeds the
/// tolerance.
pub fn cmd_gradcheck(
    config_path: Option<&Path>,
    kind: Option<ProblemKind>,
    seed: u64,
    points: usize,
    step: f64,
    tolerance: f64,
) -> CliResult<()> {
    let problem: Box<dyn CompositionalProblem> = match (config_path, kind) {
        (Some(path), None) => load_config(path)?.problem.build()?,
        (None, Some(kind)) => ProblemConfig::defaults_for(kind, seed).build()?,
        (None, None) => {
            return Err(CliError::Config(
                "pass --config or --problem to select what to check".into(),
            ))
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "pass either --config or --problem, not both".into(),
            ))
        }
    };
    if points == 0 {
        return Err(CliError::Config("--points must be at least 1".into()));
    }
    if !(step > 0.0) || !(tolerance > 0.0) {
        return Err(CliError::Config(
            "--step and --tolerance must be positive".into(),
        ));
    }
    let report = gradcheck_problem(problem.as_ref(), points, seed, step, tolerance)?;
    print_report(problem.name(), &report);
    if report.passes {
        Ok(())
    } else {
        Err(CliError::Verification(format!(
            "{}: max relative gradient error {:.3e} exceeds tolerance {:.1e} \
             (finite-difference agreement {:.3e})",
            problem.name(),
            report.max_rel_err,
            report.tolerance,
            report.fd_agreement
        )))
    }
}
