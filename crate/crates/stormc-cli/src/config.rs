//! Strict TOML experiment schema and its resolution into runnable pieces.
//!
//! A config file fully determines an experiment: the problem instance (by
//! generator parameters and a generator seed, or a data file), the plan that
//! fixes the optimizer hyper-parameters, the baseline parameters, the run
//! seeds, and the instrumentation toggles. Unknown keys are rejected so a
//! typo cannot silently change an experiment, and all randomness flows from
//! the seeds written in the file.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use stormc_core::planner::{
    condition_check, estimate_constants, plan_exact, plan_explicit, plan_order, ConditionReport,
    PlanCoefficients,
};
use stormc_core::problems::{Portfolio, QuadToy, Sne, ValueEval};
use stormc_core::{
    CompositionalProblem, EvalMode, HyperParams, InitBatches, MomentumWeights, OutputRule,
    ParameterPlan, PlanMode, ProblemConstants, RandomSource, RunOptions, ScgdParams, StepBatches,
};

use crate::{CliError, CliResult};

/// Environment variable overriding the configured output directory.
pub const OUT_DIR_ENV: &str = "STORMC_OUT_DIR";

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Five seeds by default, matching the quartile bands of `bench`.
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_true() -> bool {
    true
}

fn default_output_rule() -> OutputRule {
    OutputRule::Final
}

fn default_eval_mode() -> EvalMode {
    EvalMode::Sampled
}

/// The algorithms the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// The recursive-momentum compositional optimizer.
    StormC,
    /// The two-timescale stochastic compositional gradient baseline.
    Scgd,
}

impl Algorithm {
    /// The identifier used in file names and the metrics `algo` column.
    pub fn name(self) -> &'static str {
        match self {
            Self::StormC => "storm-c",
            Self::Scgd => "scgd",
        }
    }
}

/// Top-level experiment configuration. See `configs/` for worked examples.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory for metrics files. Overridden by `--out` and by the
    /// `STORMC_OUT_DIR` environment variable (flag wins over both).
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Run seeds; one metrics file is produced per (algorithm, seed).
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Algorithms to run; must be non-empty and duplicate-free.
    pub algorithms: Vec<Algorithm>,
    /// Diagnostics cadence in iterations; defaults to `max(1, T/100)`.
    #[serde(default)]
    pub cadence: Option<u64>,
    /// Fail a run (exit 2) when any runtime bound is violated.
    #[serde(default = "default_true")]
    pub runtime_assertions: bool,
    /// Compute estimation-error diagnostics at diagnostic rows (costs extra
    /// exact oracle passes, so it is off by default).
    #[serde(default)]
    pub estimation_errors: bool,
    /// Count diagnostic oracle passes in the IFO column.
    #[serde(default)]
    pub include_diagnostics_ifo: bool,
    /// Which iterate a run reports as its output.
    #[serde(default = "default_output_rule")]
    pub output_rule: OutputRule,
    /// Minibatch sampling (default) or full-information enumeration.
    #[serde(default = "default_eval_mode")]
    pub eval_mode: EvalMode,
    /// Problem instance.
    pub problem: ProblemConfig,
    /// Hyper-parameter plan.
    pub plan: PlanConfig,
    /// Baseline parameters; defaults apply when the table is omitted.
    #[serde(default)]
    pub scgd: Option<ScgdConfig>,
    /// Analytically known problem constants.
    #[serde(default)]
    pub constants: Option<ConstantsConfig>,
    /// Estimate problem constants by sampling instead of stating them.
    #[serde(default)]
    pub estimate_constants: Option<EstimateConfig>,
}

/// Problem kinds the harness can construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// Fixed four-dimensional quadratic composition with known constants.
    QuadToy,
    /// Mean-variance portfolio selection on sampled return vectors.
    Portfolio,
    /// Sparse policy-evaluation residual on sampled backup tables.
    ValueEval,
    /// Stochastic neighbour embedding of clustered points.
    Sne,
}

/// Problem table: a kind plus its generator parameters (or a data file).
///
/// Keys that do not apply to the chosen kind are rejected. Generator
/// parameters default to the desk scales used throughout the test suite:
/// portfolio 200 samples x 20 assets at condition number 4, value
/// evaluation 50 states x 5 actions with 100 sampled backup tables,
/// neighbour embedding of 60 points into the plane.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Generator seed (ignored by `quad-toy` and data-file problems).
    #[serde(default)]
    pub seed: u64,
    /// Portfolio: number of return samples.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Portfolio: number of assets.
    #[serde(default)]
    pub assets: Option<usize>,
    /// Portfolio: covariance condition number of the sampled returns.
    #[serde(default)]
    pub condition_number: Option<f64>,
    /// Portfolio: CSV of returns (rows = samples, columns = assets) instead
    /// of generation.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Value evaluation: number of states.
    #[serde(default)]
    pub states: Option<usize>,
    /// Value evaluation: number of actions averaged into the chain.
    #[serde(default)]
    pub actions: Option<usize>,
    /// Value evaluation: number of sampled backup tables.
    #[serde(default)]
    pub tables: Option<usize>,
    /// Neighbour embedding: number of embedded points.
    #[serde(default)]
    pub points: Option<usize>,
    /// Neighbour embedding: embedding dimension.
    #[serde(default)]
    pub embed_dim: Option<usize>,
}

impl ProblemConfig {
    /// A config that builds the named problem at its desk-scale defaults.
    pub fn defaults_for(kind: ProblemKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            samples: None,
            assets: None,
            condition_number: None,
            data: None,
            states: None,
            actions: None,
            tables: None,
            points: None,
            embed_dim: None,
        }
    }

    fn reject_foreign_keys(&self) -> CliResult<()> {
        let set: &[(&str, bool, &[ProblemKind])] = &[
            ("samples", self.samples.is_some(), &[ProblemKind::Portfolio]),
            ("assets", self.assets.is_some(), &[ProblemKind::Portfolio]),
            (
                "condition_number",
                self.condition_number.is_some(),
                &[ProblemKind::Portfolio],
            ),
            ("data", self.data.is_some(), &[ProblemKind::Portfolio]),
            ("states", self.states.is_some(), &[ProblemKind::ValueEval]),
            ("actions", self.actions.is_some(), &[ProblemKind::ValueEval]),
            ("tables", self.tables.is_some(), &[ProblemKind::ValueEval]),
            ("points", self.points.is_some(), &[ProblemKind::Sne]),
            ("embed_dim", self.embed_dim.is_some(), &[ProblemKind::Sne]),
        ];
        for (key, present, kinds) in set {
            if *present && !kinds.contains(&self.kind) {
                return Err(CliError::Config(format!(
                    "problem key `{key}` does not apply to kind `{}`",
                    kind_name(self.kind)
                )));
            }
        }
        Ok(())
    }

    /// Constructs the problem instance this table describes.
    pub fn build(&self) -> CliResult<Box<dyn CompositionalProblem>> {
        self.reject_foreign_keys()?;
        let mut rng = RandomSource::from_seed(self.seed);
        match self.kind {
            ProblemKind::QuadToy => Ok(Box::new(QuadToy::new())),
            ProblemKind::Portfolio => {
                if let Some(path) = &self.data {
                    if self.samples.is_some()
                        || self.assets.is_some()
                        || self.condition_number.is_some()
                    {
                        return Err(CliError::Config(
                            "portfolio takes either `data` or generator parameters, not both"
                                .into(),
                        ));
                    }
                    let returns = load_matrix_csv(path)?;
                    Ok(Box::new(Portfolio::new(returns).map_err(CliError::config)?))
                } else {
                    let samples = self.samples.unwrap_or(200);
                    let assets = self.assets.unwrap_or(20);
                    let cond = self.condition_number.unwrap_or(4.0);
                    Ok(Box::new(
                        Portfolio::generate(samples, assets, cond, &mut rng)
                            .map_err(CliError::config)?,
                    ))
                }
            }
            ProblemKind::ValueEval => {
                let states = self.states.unwrap_or(50);
                let actions = self.actions.unwrap_or(5);
                let tables = self.tables.unwrap_or(100);
                Ok(Box::new(
                    ValueEval::generate(states, actions, tables, &mut rng)
                        .map_err(CliError::config)?,
                ))
            }
            ProblemKind::Sne => {
                let points = self.points.unwrap_or(60);
                let embed_dim = self.embed_dim.unwrap_or(2);
                Ok(Box::new(
                    Sne::generate(points, embed_dim, &mut rng).map_err(CliError::config)?,
                ))
            }
        }
    }
}

fn kind_name(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::QuadToy => "quad-toy",
        ProblemKind::Portfolio => "portfolio",
        ProblemKind::ValueEval => "value-eval",
        ProblemKind::Sne => "sne",
    }
}

/// Reads a headerless CSV of floats into a dense matrix.
fn load_matrix_csv(path: &Path) -> CliResult<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut cols = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let width = record.len();
        if *cols.get_or_insert(width) != width {
            return Err(CliError::Config(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                row + 1,
                width,
                cols.unwrap()
            )));
        }
        for field in record.iter() {
            let value: f64 = field.parse().map_err(|_| {
                CliError::Config(format!(
                    "{}: row {}: `{field}` is not a number",
                    path.display(),
                    row + 1
                ))
            })?;
            data.push(value);
        }
    }
    let cols = cols.unwrap_or(0);
    if data.is_empty() {
        return Err(CliError::Config(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(DMatrix::from_row_iterator(data.len() / cols, cols, data))
}

fn one() -> f64 {
    1.0
}

/// Coefficient table of an order-level plan; omitted entries default to 1.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    #[serde(default = "one")]
    pub alpha_g: f64,
    #[serde(default = "one")]
    pub alpha_jac: f64,
    #[serde(default = "one")]
    pub alpha_f: f64,
    #[serde(default = "one")]
    pub beta_g: f64,
    #[serde(default = "one")]
    pub beta_jac: f64,
    #[serde(default = "one")]
    pub beta_f: f64,
    #[serde(default = "one")]
    pub gamma_g: f64,
    #[serde(default = "one")]
    pub gamma_jac: f64,
    #[serde(default = "one")]
    pub gamma_f: f64,
    #[serde(default = "one")]
    pub t_coeff: f64,
}

impl From<CoefficientsConfig> for PlanCoefficients {
    fn from(c: CoefficientsConfig) -> Self {
        Self {
            alpha_g: c.alpha_g,
            alpha_jac: c.alpha_jac,
            alpha_f: c.alpha_f,
            beta_g: c.beta_g,
            beta_jac: c.beta_jac,
            beta_f: c.beta_f,
            gamma_g: c.gamma_g,
            gamma_jac: c.gamma_jac,
            gamma_f: c.gamma_f,
            t_coeff: c.t_coeff,
        }
    }
}

/// Plan table: the mode plus the parameters that mode needs.
///
/// `explicit` takes the hyper-parameters directly: `eta`, `t_iters`, the
/// momentum weights (`a` uniform, or `a_g`/`a_jac`/`a_f`), the init batch
/// sizes (`s` or per-estimator), and the step batch sizes (`b` or
/// per-estimator). `order` takes `eta` and an optional `coefficients` table.
/// `exact` takes only `eps` and derives everything from the problem
/// constants.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub mode: PlanMode,
    /// Target accuracy; every mode needs it.
    pub eps: f64,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub t_iters: Option<u64>,
    /// Uniform momentum weight shorthand.
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub a_g: Option<f64>,
    #[serde(default)]
    pub a_jac: Option<f64>,
    #[serde(default)]
    pub a_f: Option<f64>,
    /// Uniform init batch size shorthand.
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default)]
    pub s_g: Option<usize>,
    #[serde(default)]
    pub s_jac: Option<usize>,
    #[serde(default)]
    pub s_f: Option<usize>,
    /// Uniform step batch size shorthand.
    #[serde(default)]
    pub b: Option<usize>,
    #[serde(default)]
    pub b_g: Option<usize>,
    #[serde(default)]
    pub b_jac: Option<usize>,
    #[serde(default)]
    pub b_f: Option<usize>,
    /// Order-mode coefficient table.
    #[serde(default)]
    pub coefficients: Option<CoefficientsConfig>,
}

/// Resolves a `uniform` shorthand against per-estimator keys: exactly one of
/// the two forms must be given, and the per-estimator form must be complete.
fn resolve_triple<T: Copy>(
    group: &str,
    uniform: Option<T>,
    g: Option<T>,
    jac: Option<T>,
    f: Option<T>,
) -> CliResult<(T, T, T)> {
    let individual = [g.is_some(), jac.is_some(), f.is_some()];
    match (uniform, individual.iter().any(|&p| p)) {
        (Some(_), true) => Err(CliError::Config(format!(
            "give either `{group}` or the per-estimator `{group}_g`/`{group}_jac`/`{group}_f`, not both"
        ))),
        (Some(u), false) => Ok((u, u, u)),
        (None, _) => match (g, jac, f) {
            (Some(g), Some(jac), Some(f)) => Ok((g, jac, f)),
            _ => Err(CliError::Config(format!(
                "explicit plans need `{group}` or all of `{group}_g`/`{group}_jac`/`{group}_f`"
            ))),
        },
    }
}

impl PlanConfig {
    fn reject_keys(&self, mode: &str, keys: &[(&str, bool)]) -> CliResult<()> {
        for (key, present) in keys {
            if *present {
                return Err(CliError::Config(format!(
                    "plan key `{key}` does not apply to mode `{mode}`"
                )));
            }
        }
        Ok(())
    }

    fn explicit_keys_present(&self) -> bool {
        self.a.is_some()
            || self.a_g.is_some()
            || self.a_jac.is_some()
            || self.a_f.is_some()
            || self.s.is_some()
            || self.s_g.is_some()
            || self.s_jac.is_some()
            || self.s_f.is_some()
            || self.b.is_some()
            || self.b_g.is_some()
            || self.b_jac.is_some()
            || self.b_f.is_some()
    }

    /// Resolves the table into a concrete plan. `constants` are required by
    /// `exact` mode and ignored by the others.
    pub fn resolve(&self, constants: Option<&ProblemConstants>) -> CliResult<ParameterPlan> {
        match self.mode {
            PlanMode::Exact => {
                self.reject_keys(
                    "exact",
                    &[
                        ("eta", self.eta.is_some()),
                        ("t_iters", self.t_iters.is_some()),
                        ("coefficients", self.coefficients.is_some()),
                        ("batch/weight keys", self.explicit_keys_present()),
                    ],
                )?;
                let constants = constants.ok_or_else(|| {
                    CliError::Config(
                        "exact plans need problem constants: add a [constants] table, an \
                         [estimate_constants] table, or use the quad-toy problem"
                            .into(),
                    )
                })?;
                plan_exact(constants, self.eps).map_err(CliError::config)
            }
            PlanMode::Order => {
                self.reject_keys(
                    "order",
                    &[
                        ("t_iters", self.t_iters.is_some()),
                        ("batch/weight keys", self.explicit_keys_present()),
                    ],
                )?;
                let eta = self.eta.ok_or_else(|| {
                    CliError::Config("order plans need `eta` under [plan]".into())
                })?;
                let coeffs = self
                    .coefficients
                    .map(PlanCoefficients::from)
                    .unwrap_or_default();
                plan_order(self.eps, coeffs, eta).map_err(CliError::config)
            }
            PlanMode::Explicit => {
                self.reject_keys("explicit", &[("coefficients", self.coefficients.is_some())])?;
                let eta = self.eta.ok_or_else(|| {
                    CliError::Config("explicit plans need `eta` under [plan]".into())
                })?;
                let t_iters = self.t_iters.ok_or_else(|| {
                    CliError::Config("explicit plans need `t_iters` under [plan]".into())
                })?;
                let (a_g, a_jac, a_f) =
                    resolve_triple("a", self.a, self.a_g, self.a_jac, self.a_f)?;
                let (s_g, s_jac, s_f) =
                    resolve_triple("s", self.s, self.s_g, self.s_jac, self.s_f)?;
                let (b_g, b_jac, b_f) =
                    resolve_triple("b", self.b, self.b_g, self.b_jac, self.b_f)?;
                let hyper = HyperParams {
                    eta,
                    eps: self.eps,
                    weights: MomentumWeights { a_g, a_jac, a_f },
                    init: InitBatches { s_g, s_jac, s_f },
                    steps: StepBatches { b_g, b_jac, b_f },
                    t_iters,
                };
                plan_explicit(&hyper).map_err(CliError::config)
            }
        }
    }
}

/// Baseline table. Batch sizes default to the plan's step batches and the
/// iteration count to the plan's total oracle budget, so the two algorithms
/// compare at equal cost by default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScgdConfig {
    #[serde(default = "ScgdConfig::default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "ScgdConfig::default_alpha_decay")]
    pub alpha_decay: f64,
    #[serde(default = "ScgdConfig::default_beta0")]
    pub beta0: f64,
    #[serde(default = "ScgdConfig::default_beta_decay")]
    pub beta_decay: f64,
    /// Uniform batch size shorthand.
    #[serde(default)]
    pub b: Option<usize>,
    #[serde(default)]
    pub b_g: Option<usize>,
    #[serde(default)]
    pub b_jac: Option<usize>,
    #[serde(default)]
    pub b_f: Option<usize>,
    #[serde(default)]
    pub t_iters: Option<u64>,
}

impl Default for ScgdConfig {
    fn default() -> Self {
        Self {
            alpha0: Self::default_alpha0(),
            alpha_decay: Self::default_alpha_decay(),
            beta0: Self::default_beta0(),
            beta_decay: Self::default_beta_decay(),
            b: None,
            b_g: None,
            b_jac: None,
            b_f: None,
            t_iters: None,
        }
    }
}

impl ScgdConfig {
    /// Unit scale: the classical schedule `alpha_k = k^(-3/4)` untuned.
    fn default_alpha0() -> f64 {
        1.0
    }

    /// Classical main-step decay exponent.
    fn default_alpha_decay() -> f64 {
        0.75
    }

    fn default_beta0() -> f64 {
        1.0
    }

    /// Classical inner-tracking decay exponent.
    fn default_beta_decay() -> f64 {
        0.5
    }

    /// Resolves against a plan: unset batches copy the plan's step batches,
    /// an unset iteration count spends the plan's total oracle budget.
    pub fn resolve(&self, plan: &ParameterPlan) -> CliResult<ScgdParams> {
        let steps = if self.b.is_none()
            && self.b_g.is_none()
            && self.b_jac.is_none()
            && self.b_f.is_none()
        {
            plan.hyper.steps
        } else {
            let (b_g, b_jac, b_f) = resolve_triple("b", self.b, self.b_g, self.b_jac, self.b_f)?;
            StepBatches { b_g, b_jac, b_f }
        };
        let t_iters = self
            .t_iters
            .unwrap_or_else(|| (plan.ifo_total() / steps.total()).max(1));
        let params = ScgdParams {
            alpha0: self.alpha0,
            alpha_decay: self.alpha_decay,
            beta0: self.beta0,
            beta_decay: self.beta_decay,
            steps,
            t_iters,
        };
        params.validate().map_err(CliError::config)?;
        Ok(params)
    }
}

/// Stated problem constants; `l_phi` optionally overrides the derived
/// composite smoothness.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub delta: f64,
    pub l_f: f64,
    pub l_g: f64,
    pub m_f: f64,
    pub m_g: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    #[serde(default)]
    pub l_phi: Option<f64>,
}

impl From<ConstantsConfig> for ProblemConstants {
    fn from(c: ConstantsConfig) -> Self {
        Self {
            delta: c.delta,
            l_f: c.l_f,
            l_g: c.l_g,
            m_f: c.m_f,
            m_g: c.m_g,
            h1: c.h1,
            h2: c.h2,
            h3: c.h3,
            l_phi_given: c.l_phi,
            heuristic: false,
        }
    }
}

/// Sampling-based constant estimation parameters.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Radius of the ball around the initial point to sample.
    pub radius: f64,
    #[serde(default = "EstimateConfig::default_budget")]
    pub sample_budget: usize,
    #[serde(default)]
    pub seed: u64,
}

impl EstimateConfig {
    fn default_budget() -> usize {
        500
    }
}

impl ExperimentConfig {
    /// Structural checks beyond what the schema enforces.
    pub fn validate(&self) -> CliResult<()> {
        if self.algorithms.is_empty() {
            return Err(CliError::Config("`algorithms` must not be empty".into()));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(CliError::Config(format!(
                    "`algorithms` lists `{}` twice",
                    a.name()
                )));
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("`seeds` must not be empty".into()));
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(CliError::Config(format!("`seeds` lists {s} twice")));
            }
        }
        if self.cadence == Some(0) {
            return Err(CliError::Config("`cadence` must be at least 1".into()));
        }
        if self.constants.is_some() && self.estimate_constants.is_some() {
            return Err(CliError::Config(
                "give either [constants] or [estimate_constants], not both".into(),
            ));
        }
        Ok(())
    }

    /// Resolves the problem constants: stated table first, then sampling
    /// estimation, then the quad-toy analytic values.
    pub fn resolve_constants(
        &self,
        problem: &dyn CompositionalProblem,
    ) -> CliResult<Option<ProblemConstants>> {
        if let Some(table) = self.constants {
            let constants = ProblemConstants::from(table);
            constants.validate().map_err(CliError::config)?;
            return Ok(Some(constants));
        }
        if let Some(est) = self.estimate_constants {
            let mut rng = RandomSource::from_seed(est.seed);
            let constants = estimate_constants(problem, est.radius, est.sample_budget, &mut rng)
                .map_err(CliError::config)?;
            return Ok(Some(constants));
        }
        if self.problem.kind == ProblemKind::QuadToy {
            return Ok(Some(QuadToy::new().constants()));
        }
        Ok(None)
    }
}

/// A fully resolved experiment, ready to run.
pub struct Experiment {
    pub problem: Box<dyn CompositionalProblem>,
    pub constants: Option<ProblemConstants>,
    pub plan: ParameterPlan,
    /// Resolved baseline parameters when `scgd` is among the algorithms.
    pub scgd: Option<ScgdParams>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub runtime_assertions: bool,
    options: RunOptions,
}

impl Experiment {
    /// Run options shared by every run of the experiment.
    pub fn run_options(&self) -> RunOptions {
        self.options.clone()
    }
}

/// Loads a config file, reporting schema errors with the offending key and
/// position.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(config)
}

/// Resolves a loaded config into a runnable experiment. `seed_override` and
/// `out_override` come from the command line; the `STORMC_OUT_DIR`
/// environment variable sits between the flag and the file.
pub fn resolve_experiment(
    config: &ExperimentConfig,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
    include_diagnostics_ifo: bool,
) -> CliResult<Experiment> {
    let problem = config.problem.build()?;
    let constants = config.resolve_constants(problem.as_ref())?;
    let plan = config.plan.resolve(constants.as_ref())?;
    let scgd = if config.algorithms.contains(&Algorithm::Scgd) {
        Some(
            config
                .scgd
                .clone()
                .unwrap_or_default()
                .resolve(&plan)?,
        )
    } else {
        if config.scgd.is_some() {
            return Err(CliError::Config(
                "[scgd] table given but `scgd` is not among the algorithms".into(),
            ));
        }
        None
    };
    let seeds = match seed_override {
        Some(seed) => vec![seed],
        None => config.seeds.clone(),
    };
    let out_dir = out_override
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.out_dir.clone());
    let options = RunOptions {
        output_rule: config.output_rule,
        cadence: config.cadence,
        mode: config.eval_mode,
        constants: constants.clone(),
        estimation_errors: config.estimation_errors,
        include_diagnostics_ifo: config.include_diagnostics_ifo || include_diagnostics_ifo,
    };
    Ok(Experiment {
        problem,
        constants,
        plan,
        scgd,
        algorithms: config.algorithms.clone(),
        seeds,
        out_dir,
        runtime_assertions: config.runtime_assertions,
        options,
    })
}

/// Evaluates the feasibility condition of a resolved plan when constants are
/// available: the plan's own report for exact mode, or a fresh check of the
/// plan's coefficients otherwise.
pub fn plan_condition(
    plan: &ParameterPlan,
    constants: Option<&ProblemConstants>,
) -> CliResult<Option<ConditionReport>> {
    if let Some(report) = &plan.feasibility {
        return Ok(Some(report.clone()));
    }
    match constants {
        Some(c) => condition_check(c, &plan.coeffs, plan.eps)
            .map(Some)
            .map_err(CliError::config),
        None => Ok(None),
    }
}
