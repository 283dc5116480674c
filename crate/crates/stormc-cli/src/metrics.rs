//! Plot-ready CSV serialization of run records and IFO-binned aggregation.
//!
//! The per-run schema is fixed so downstream plotting never needs code
//! changes:
//!
//! ```text
//! algo,problem,seed,iter,ifo,gamma,f_norm,step_norm,obj_gap,grad_norm,est_err_f,est_err_g,est_err_G
//! ```
//!
//! One row per iteration `t = 0..=T`. Diagnostic columns are empty at
//! iterations where the quantity was not computed (off-cadence rows, unknown
//! optimum) or does not exist (no clipping factor in the baseline, no step
//! out of the final iterate).

use std::path::{Path, PathBuf};

use serde::Serialize;
use stormc_core::RunRecord;

use crate::{CliError, CliResult};

/// The fixed per-run CSV header.
pub const METRICS_HEADER: &str =
    "algo,problem,seed,iter,ifo,gamma,f_norm,step_norm,obj_gap,grad_norm,est_err_f,est_err_g,est_err_G";

#[derive(Serialize)]
struct CsvRow<'a> {
    algo: &'a str,
    problem: &'a str,
    seed: u64,
    iter: u64,
    ifo: u64,
    gamma: Option<f64>,
    f_norm: Option<f64>,
    step_norm: Option<f64>,
    obj_gap: Option<f64>,
    grad_norm: Option<f64>,
    est_err_f: Option<f64>,
    est_err_g: Option<f64>,
    #[serde(rename = "est_err_G")]
    est_err_jac: Option<f64>,
}

/// Canonical file name of a run's metrics: `{algo}-{problem}-seed{seed}.csv`.
pub fn metrics_filename(record: &RunRecord) -> String {
    format!(
        "{}-{}-seed{}.csv",
        record.algo, record.problem, record.seed
    )
}

/// Writes one run record to `path` in the fixed schema.
pub fn write_metrics(path: &Path, record: &RunRecord) -> CliResult<()> {
    let io_err = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    for row in &record.rows {
        writer
            .serialize(CsvRow {
                algo: &record.algo,
                problem: &record.problem,
                seed: record.seed,
                iter: row.t,
                ifo: row.ifo,
                gamma: row.gamma,
                f_norm: row.f_norm,
                step_norm: row.step_norm,
                obj_gap: row.obj_gap,
                grad_norm: row.grad_norm,
                est_err_f: row.est_err_f,
                est_err_g: row.est_err_g,
                est_err_jac: row.est_err_jac,
            })
            .map_err(io_err)?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Writes one record per (algorithm, seed) into `out_dir` and returns the
/// paths, in run order.
pub fn write_all(out_dir: &Path, records: &[RunRecord]) -> CliResult<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(records.len());
    for record in records {
        let path = out_dir.join(metrics_filename(record));
        write_metrics(&path, record)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Three-point summary of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear-interpolation percentile of sorted values, `p` in `[0, 1]`.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Quartiles of a non-empty sample (linear interpolation between order
/// statistics, so a single seed reproduces its raw value).
pub fn quartiles(values: &[f64]) -> Quartiles {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Quartiles {
        q1: percentile(&sorted, 0.25),
        median: percentile(&sorted, 0.5),
        q3: percentile(&sorted, 0.75),
    }
}

/// One aggregate bin: quartile bands of the diagnostics of one algorithm at
/// one oracle-call checkpoint, across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub algo: String,
    pub ifo: u64,
    /// Absent when the optimum (and hence the gap) is unknown.
    pub obj_gap: Option<Quartiles>,
    pub grad_norm: Quartiles,
}

/// Bins diagnostic rows by (algorithm, cumulative oracle calls) and reduces
/// each bin to quartile bands. Only checkpoints present in every seed of an
/// algorithm are kept, so bands always summarize the full seed set.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut algos: Vec<&str> = Vec::new();
    for record in records {
        if !algos.contains(&record.algo.as_str()) {
            algos.push(&record.algo);
        }
    }
    let mut out = Vec::new();
    for algo in algos {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.algo == algo).collect();
        let mut checkpoints: Vec<u64> = runs[0].diagnostic_rows().map(|r| r.ifo).collect();
        checkpoints.retain(|&ifo| {
            runs.iter()
                .all(|run| run.diagnostic_rows().any(|r| r.ifo == ifo))
        });
        for ifo in checkpoints {
            let mut gaps = Vec::with_capacity(runs.len());
            let mut grads = Vec::with_capacity(runs.len());
            for run in &runs {
                let row = run
                    .diagnostic_rows()
                    .find(|r| r.ifo == ifo)
                    .expect("checkpoint present in every seed");
                if let Some(gap) = row.obj_gap {
                    gaps.push(gap);
                }
                grads.push(row.grad_norm.expect("diagnostic rows carry grad_norm"));
            }
            out.push(AggregateRow {
                algo: algo.to_string(),
                ifo,
                obj_gap: (gaps.len() == runs.len()).then(|| quartiles(&gaps)),
                grad_norm: quartiles(&grads),
            });
        }
    }
    out
}

#[derive(Serialize)]
struct AggregateCsvRow<'a> {
    algo: &'a str,
    ifo: u64,
    obj_gap_q1: Option<f64>,
    obj_gap_median: Option<f64>,
    obj_gap_q3: Option<f64>,
    grad_norm_q1: f64,
    grad_norm_median: f64,
    grad_norm_q3: f64,
}

/// Writes aggregate bins to `path` with header
/// `algo,ifo,obj_gap_q1,obj_gap_median,obj_gap_q3,grad_norm_q1,grad_norm_median,grad_norm_q3`.
pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> CliResult<()> {
    let io_err = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    for row in rows {
        writer
            .serialize(AggregateCsvRow {
                algo: &row.algo,
                ifo: row.ifo,
                obj_gap_q1: row.obj_gap.map(|q| q.q1),
                obj_gap_median: row.obj_gap.map(|q| q.median),
                obj_gap_q3: row.obj_gap.map(|q| q.q3),
                grad_norm_q1: row.grad_norm.q1,
                grad_norm_median: row.grad_norm.median,
                grad_norm_q3: row.grad_norm.q3,
            })
            .map_err(io_err)?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(())
}
