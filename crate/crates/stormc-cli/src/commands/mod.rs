//! The five subcommand implementations.

mod bench;
mod gradcheck;
mod plan;
mod run;
mod verify;

pub use bench::cmd_bench;
pub use gradcheck::{cmd_gradcheck, gradcheck_problem, perturbed_points};
pub use plan::cmd_plan;
pub use run::cmd_run;
pub use verify::{cmd_verify, Suite};

use stormc_core::diagnostics::assert_runtime_bounds;
use stormc_core::{run_scgd, run_storm_c, RunRecord};

use crate::config::{Algorithm, Experiment};
use crate::{CliError, CliResult};

/// Runs one (algorithm, seed) cell of an experiment.
pub fn run_one(exp: &Experiment, algo: Algorithm, seed: u64) -> CliResult<RunRecord> {
    let options = exp.run_options();
    let record = match algo {
        Algorithm::StormC => {
            run_storm_c(exp.problem.as_ref(), &exp.plan.hyper, seed, None, &options)
        }
        Algorithm::Scgd => {
            let params = exp
                .scgd
                .as_ref()
                .expect("scgd parameters resolved for scgd runs");
            run_scgd(exp.problem.as_ref(), params, seed, None, &options)
        }
    }
    .map_err(CliError::numerical)?;
    if exp.runtime_assertions {
        let violations = assert_runtime_bounds(&record);
        if !violations.is_empty() {
            return Err(CliError::Numerical(format!(
                "{} seed {}: {}",
                record.algo,
                seed,
                violations.join("; ")
            )));
        }
    }
    Ok(record)
}

/// Runs the full (algorithm x seed) grid sequentially in config order, so
/// repeated invocations replay identically.
pub fn execute_runs(exp: &Experiment) -> CliResult<Vec<RunRecord>> {
    let mut records = Vec::with_capacity(exp.algorithms.len() * exp.seeds.len());
    for &algo in &exp.algorithms {
        for &seed in &exp.seeds {
            records.push(run_one(exp, algo, seed)?);
        }
    }
    Ok(records)
}

/// One-line summary of a finished run for the console.
fn run_summary(record: &RunRecord) -> String {
    let last = record
        .diagnostic_rows()
        .last()
        .expect("every run has a final diagnostic row");
    let mut line = format!(
        "{} {} seed {}: T={}, ifo={}",
        record.algo,
        record.problem,
        record.seed,
        record.rows.len().saturating_sub(1),
        record.ifo_total
    );
    if let Some(grad) = last.grad_norm {
        line.push_str(&format!(", grad_norm={grad:.6e}"));
    }
    if let Some(gap) = last.obj_gap {
        line.push_str(&format!(", obj_gap={gap:.6e}"));
    }
    line
}
