//! `stormc bench`: multi-seed algorithm comparison with IFO-binned bands.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{load_config, resolve_experiment};
use crate::metrics::{aggregate, write_aggregate, write_all};
use crate::{CliError, CliResult};

use super::execute_runs;

/// Runs the configured (algorithm x seed) grid, writes the raw per-run
/// metrics plus an `aggregate.csv` of quartile bands binned by cumulative
/// oracle calls, and prints the final bin of each algorithm.
pub fn cmd_bench(
    config_path: &Path,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
    include_diagnostics_ifo: bool,
) -> CliResult<()> {
    let config = load_config(config_path)?;
    let exp = resolve_experiment(&config, seed_override, out_override, include_diagnostics_ifo)?;
    fs::create_dir_all(&exp.out_dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", exp.out_dir.display())))?;
    let records = execute_runs(&exp)?;
    let paths = write_all(&exp.out_dir, &records)?;
    for path in &paths {
        println!("wrote {}", path.display());
    }
    let bins = aggregate(&records);
    let aggregate_path = exp.out_dir.join("aggregate.csv");
    write_aggregate(&aggregate_path, &bins)?;
    println!("wrote {}", aggregate_path.display());

    for algo in &exp.algorithms {
        if let Some(last) = bins.iter().filter(|b| b.algo == algo.name()).last() {
            let mut line = format!(
                "{} @ ifo {}: grad_norm median {:.6e} [{:.6e}, {:.6e}]",
                last.algo, last.ifo, last.grad_norm.median, last.grad_norm.q1, last.grad_norm.q3
            );
            if let Some(gap) = last.obj_gap {
                line.push_str(&format!(
                    ", obj_gap median {:.6e} [{:.6e}, {:.6e}]",
                    gap.median, gap.q1, gap.q3
                ));
            }
            println!("{line}");
        }
    }
    Ok(())
}
