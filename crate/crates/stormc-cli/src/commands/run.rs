//! `stormc run`: execute a configured experiment and write metrics CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{load_config, resolve_experiment};
use crate::metrics::write_all;
use crate::{CliError, CliResult};

use super::{execute_runs, run_summary};

/// Runs every (algorithm, seed) cell of the configured experiment and writes
/// one metrics file per cell into the output directory.
pub fn cmd_run(
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
    for (record, path) in records.iter().zip(&paths) {
        println!("{}", run_summary(record));
        println!("  wrote {}", path.display());
    }
    Ok(())
}
