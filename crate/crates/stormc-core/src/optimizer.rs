//! Optimization loops: the recursive-momentum compositional optimizer with
//! normalized steps, and a two-timescale stochastic compositional gradient
//! (SCGD) baseline. Both produce the same [`RunRecord`] so runs are directly
//! comparable under the unified oracle-call (IFO) cost model.
//!
//! # Main loop
//!
//! One update iteration at state `(x_t, g_t, G_t, F_t)`:
//!
//! 1. Normalized step: `x~ = x_t - eta * F_t`, `gamma_t = min(eta*eps / |x~ - x_t|, 1/2)`
//!    (`gamma_t = 1/2` when the displacement is zero), `x_{t+1} = x_t + gamma_t (x~ - x_t)`.
//!    This caps every step at `eta * eps` by construction.
//! 2. Sample three fresh batches (inner values, Jacobians, outer gradients).
//! 3. Advance the three estimates with the shared-batch momentum recursion.
//!
//! # Cost model
//!
//! One IFO unit = one component-oracle evaluation on a sampled index. A run
//! spends `S^g + S^dg + S^f` units at initialization and `B^g + B^dg + B^f`
//! per update iteration, so the cumulative count at the start of iteration `t`
//! is exactly `S + t * B`. Diagnostic evaluations of exact quantities are kept
//! out of this count unless explicitly included (they are measurement, not
//! optimization work).

use serde::{Deserialize, Serialize};

use crate::diagnostics::measure_estimation_errors;
use crate::error::{Result, StormError};
use crate::estimators::{
    advance_state, init_state, init_state_with_batches, EstimatorState, InitBatches,
    MomentumWeights,
};
use crate::eval::{exact_grad_phi, exact_phi, minibatch_g, minibatch_grad_f, minibatch_jacobian};
use crate::planner::ProblemConstants;
use crate::problem::{CompositionalProblem, Point};
use crate::sampling::{IndexBatch, RandomSource};

/// Slack for the per-step displacement bound `|x_{t+1} - x_t| <= eta * eps`
/// (exact in reals; the slack absorbs floating-point rounding only).
pub const STEP_BOUND_SLACK: f64 = 1e-12;

/// Slack for the Jacobian-estimate norm envelope check.
pub const JACOBIAN_ENVELOPE_SLACK: f64 = 1e-9;

/// Per-iteration batch sizes for the three estimator updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBatches {
    /// Inner-value batch size `B^g`.
    pub b_g: usize,
    /// Jacobian batch size `B^dg`.
    pub b_jac: usize,
    /// Outer-gradient batch size `B^f`.
    pub b_f: usize,
}

impl StepBatches {
    /// Uniform sizes `B^g = B^dg = B^f = b`.
    pub fn uniform(b: usize) -> Self {
        Self {
            b_g: b,
            b_jac: b,
            b_f: b,
        }
    }

    /// Total oracle calls per update iteration.
    pub fn total(&self) -> u64 {
        self.b_g as u64 + self.b_jac as u64 + self.b_f as u64
    }
}

/// Complete hyper-parameter set for one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Step-size scale `eta` of the normalized step.
    pub eta: f64,
    /// Accuracy parameter `eps`; caps each step at `eta * eps`.
    pub eps: f64,
    /// Momentum weights for the three estimators.
    pub weights: MomentumWeights,
    /// Initialization batch sizes.
    pub init: InitBatches,
    /// Per-iteration batch sizes.
    pub steps: StepBatches,
    /// Number of update iterations `T` (the run produces `x_1 ... x_T`).
    pub t_iters: u64,
}

impl HyperParams {
    /// Validates positivity and momentum ranges.
    pub fn validate(&self) -> Result<()> {
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(StormError::InvalidArgument(format!(
                "eta = {} must be positive",
                self.eta
            )));
        }
        if !self.eps.is_finite() || self.eps <= 0.0 {
            return Err(StormError::InvalidArgument(format!(
                "eps = {} must be positive",
                self.eps
            )));
        }
        self.weights.validate()?;
        for (name, s) in [
            ("S^g", self.init.s_g),
            ("S^dg", self.init.s_jac),
            ("S^f", self.init.s_f),
            ("B^g", self.steps.b_g),
            ("B^dg", self.steps.b_jac),
            ("B^f", self.steps.b_f),
        ] {
            if s == 0 {
                return Err(StormError::InvalidArgument(format!(
                    "batch size {name} must be at least 1"
                )));
            }
        }
        Ok(())
    }

    /// Total oracle calls of a full run: `S^g + S^dg + S^f + T * (B^g + B^dg + B^f)`.
    pub fn ifo_total(&self) -> u64 {
        self.init.total() + self.t_iters * self.steps.total()
    }
}

/// Which iterate a run reports as its output `x^`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputRule {
    /// The last iterate `x_T`.
    Final,
    /// Uniformly random among `x_1 ... x_T` (the choice analysed by the
    /// stationarity bound); falls back to `x_0` when `T = 0`.
    UniformRandom,
}

/// Whether estimator updates sample minibatches or enumerate full pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Seeded with-replacement minibatches of the configured sizes.
    Sampled,
    /// Full-enumeration batches everywhere: the estimates track the exact
    /// quantities to rounding error. Used by verification, not benchmarks.
    FullInformation,
}

/// Options controlling instrumentation of a run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Output-iterate selection rule.
    pub output_rule: OutputRule,
    /// Diagnostics cadence in iterations; `None` means `max(1, T/100)`.
    /// Diagnostic rows are always computed at `t = 0` and `t = T`.
    pub cadence: Option<u64>,
    /// Minibatch sampling vs full enumeration.
    pub mode: EvalMode,
    /// When set, the Jacobian-estimate operator norm is checked at every
    /// diagnostic row against its theoretical envelope
    /// `2*M_g + L_g*eta*eps/a_jac`; breaches are recorded as violations.
    pub constants: Option<ProblemConstants>,
    /// Compute estimation-error diagnostics (`|F_t - grad Phi|^2` etc.) at
    /// diagnostic rows. Requires exact oracle passes, so it is optional.
    pub estimation_errors: bool,
    /// Count diagnostic exact-oracle passes in the IFO column (2m + 2n per
    /// diagnostic row). Off by default: diagnostics are measurement.
    pub include_diagnostics_ifo: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            output_rule: OutputRule::Final,
            cadence: None,
            mode: EvalMode::Sampled,
            constants: None,
            estimation_errors: true,
            include_diagnostics_ifo: false,
        }
    }
}

/// One per-iteration row of a run record. Optional fields are `None` where a
/// quantity does not exist (no step out of the final iterate; no clipping
/// factor in the SCGD baseline) or was not computed (off-cadence diagnostics).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRow {
    /// Iteration index `t` (0 = state after initialization).
    pub t: u64,
    /// Cumulative oracle calls at the start of iteration `t`.
    pub ifo: u64,
    /// Norm of the gradient estimate driving the step from `x_t`.
    pub f_norm: Option<f64>,
    /// Normalized-step clipping factor `gamma_t` for the step `t -> t+1`.
    pub gamma: Option<f64>,
    /// Displacement `|x_{t+1} - x_t|` of the step `t -> t+1`.
    pub step_norm: Option<f64>,
    /// `Phi(x_t) - Phi*` when the optimum is known, else `Phi(x_t)` is
    /// omitted entirely (diagnostic rows only).
    pub obj_gap: Option<f64>,
    /// Exact gradient norm `|grad Phi(x_t)|` (diagnostic rows only).
    pub grad_norm: Option<f64>,
    /// Squared estimate error `|F_t - grad Phi(x_t)|^2` (diagnostic rows only).
    pub est_err_f: Option<f64>,
    /// Squared estimate error `|g_t - g(x_t)|^2` (diagnostic rows only).
    pub est_err_g: Option<f64>,
    /// Squared estimate error `|G_t - dg(x_t)|_F^2` (diagnostic rows only).
    pub est_err_jac: Option<f64>,
}

/// Full record of one optimization run: dense per-iteration rows `t = 0..=T`,
/// the final and selected iterates, and any runtime-bound violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Algorithm identifier (`storm-c` or `scgd`).
    pub algo: String,
    /// Problem identifier.
    pub problem: String,
    /// RNG seed of the run.
    pub seed: u64,
    /// Hyper-parameters (populated for `storm-c` runs).
    pub hyper: Option<HyperParams>,
    /// Baseline parameters (populated for `scgd` runs).
    pub scgd: Option<ScgdParams>,
    /// Oracle calls consumed by initialization.
    pub init_ifo: u64,
    /// Oracle calls consumed per update iteration.
    pub step_ifo: u64,
    /// Oracle calls at the end of the run (including diagnostics only when
    /// that option was set).
    pub ifo_total: u64,
    /// Dense rows `t = 0..=T`.
    pub rows: Vec<IterRow>,
    /// Starting point `x_0`.
    pub x0: Point,
    /// Final iterate `x_T`.
    pub x_final: Point,
    /// Selected output iterate.
    pub x_hat: Point,
    /// Index of the selected output iterate.
    pub x_hat_iter: u64,
    /// Runtime-bound violations (empty on a healthy run).
    pub violations: Vec<String>,
}

impl RunRecord {
    /// Diagnostic cadence actually used (recomputable from rows, stored for
    /// convenience when aggregating).
    pub fn diagnostic_rows(&self) -> impl Iterator<Item = &IterRow> {
        self.rows.iter().filter(|r| r.grad_norm.is_some())
    }
}

/// Normalized gradient step from `x` along the estimate `f_est`.
///
/// Returns `(x_next, gamma, step_norm)` with
/// `gamma = min(eta*eps / |eta*f_est|, 1/2)` (and `gamma = 1/2` at zero
/// displacement), `x_next = x - gamma*eta*f_est`. The displacement satisfies
/// `step_norm <= eta*eps` and `step_norm <= |eta*f_est| / 2` by construction.
pub fn normalized_step(x: &Point, f_est: &Point, eta: f64, eps: f64) -> Result<(Point, f64, f64)> {
    if !eta.is_finite() || eta <= 0.0 || !eps.is_finite() || eps <= 0.0 {
        return Err(StormError::InvalidArgument(format!(
            "normalized step needs positive finite eta and eps (got {eta}, {eps})"
        )));
    }
    if x.len() != f_est.len() {
        return Err(StormError::ShapeMismatch(format!(
            "point dimension {} vs gradient estimate dimension {}",
            x.len(),
            f_est.len()
        )));
    }
    let displacement = f_est * (-eta);
    let dist = displacement.norm();
    let gamma = if dist == 0.0 {
        0.5
    } else {
        (eta * eps / dist).min(0.5)
    };
    let x_next = x + &displacement * gamma;
    Ok((x_next, gamma, gamma * dist))
}

struct DiagnosticSchedule {
    cadence: u64,
    t_iters: u64,
}

impl DiagnosticSchedule {
    fn new(cadence: Option<u64>, t_iters: u64) -> Self {
        let cadence = cadence.unwrap_or_else(|| (t_iters / 100).max(1)).max(1);
        Self { cadence, t_iters }
    }

    fn is_due(&self, t: u64) -> bool {
        t % self.cadence == 0 || t == self.t_iters
    }
}

/// Runs the recursive-momentum compositional optimizer for `params.t_iters`
/// update iterations from `x0` (defaulting to the problem's initial point).
pub fn run_storm_c<P: CompositionalProblem + ?Sized>(
    problem: &P,
    params: &HyperParams,
    seed: u64,
    x0: Option<&Point>,
    options: &RunOptions,
) -> Result<RunRecord> {
    params.validate()?;
    let t_iters = params.t_iters;
    let m = problem.inner_count();
    let n = problem.outer_count();
    let x0 = match x0 {
        Some(x) => x.clone(),
        None => problem.initial_point(),
    };

    let mut rng = RandomSource::from_seed(seed);

    // Initialization: three batches in pinned order (or full enumeration).
    let (mut state, init_ifo) = match options.mode {
        EvalMode::Sampled => init_state(problem, &x0, params.init, &mut rng)?,
        EvalMode::FullInformation => {
            let full_m = IndexBatch::enumeration(m)?;
            let full_n = IndexBatch::enumeration(n)?;
            let state = init_state_with_batches(problem, &x0, &full_m, &full_m, &full_n)?;
            (state, (2 * m + n) as u64)
        }
    };
    let step_ifo = match options.mode {
        EvalMode::Sampled => params.steps.total(),
        EvalMode::FullInformation => (2 * m + n) as u64,
    };

    // Output-iterate index: drawn up front (independent of the trajectory) so
    // the selected iterate can be captured in flight without storing the
    // whole trajectory. Stream position is pinned: right after init batches.
    let x_hat_iter = match options.output_rule {
        OutputRule::Final => t_iters,
        OutputRule::UniformRandom => {
            if t_iters == 0 {
                0
            } else {
                1 + rng.draw_index(t_iters as usize) as u64
            }
        }
    };

    let schedule = DiagnosticSchedule::new(options.cadence, t_iters);
    let envelope = options
        .constants
        .as_ref()
        .map(|c| 2.0 * c.m_g + c.l_g * params.eta * params.eps / params.weights.a_jac);

    let mut rows = Vec::with_capacity(t_iters as usize + 1);
    let mut violations = Vec::new();
    let mut ifo: u64 = init_ifo;
    let mut x = x0.clone();
    let mut x_hat = x0.clone();

    for t in 0..=t_iters {
        if !state.grad.iter().all(|v| v.is_finite()) {
            return Err(StormError::NumericalFailure {
                iteration: t,
                message: "gradient estimate became non-finite".into(),
            });
        }

        let mut row = IterRow {
            t,
            ifo,
            f_norm: Some(state.grad.norm()),
            gamma: None,
            step_norm: None,
            obj_gap: None,
            grad_norm: None,
            est_err_f: None,
            est_err_g: None,
            est_err_jac: None,
        };

        if schedule.is_due(t) {
            fill_diagnostics(
                problem,
                &x,
                Some(&state),
                options.estimation_errors,
                &mut row,
            )?;
            if options.include_diagnostics_ifo {
                ifo += (2 * m + 2 * n) as u64;
            }
            if let Some(bound) = envelope {
                let op_norm = state.jac.clone().svd(false, false).singular_values[0];
                if op_norm >= bound + JACOBIAN_ENVELOPE_SLACK {
                    violations.push(format!(
                        "iteration {t}: Jacobian estimate norm {op_norm} breaches envelope {bound}"
                    ));
                }
            }
        }

        if t == t_iters {
            rows.push(row);
            break;
        }

        // Step, then advance the three estimates with fresh shared batches.
        let (x_next, gamma, step_norm) = normalized_step(&x, &state.grad, params.eta, params.eps)?;
        if step_norm > params.eta * params.eps + STEP_BOUND_SLACK {
            violations.push(format!(
                "iteration {t}: step norm {step_norm} exceeds eta*eps = {}",
                params.eta * params.eps
            ));
        }
        row.gamma = Some(gamma);
        row.step_norm = Some(step_norm);
        rows.push(row);

        let (batch_g, batch_jac, batch_f) = match options.mode {
            EvalMode::Sampled => (
                rng.sample_batch(m, params.steps.b_g)?,
                rng.sample_batch(m, params.steps.b_jac)?,
                rng.sample_batch(n, params.steps.b_f)?,
            ),
            EvalMode::FullInformation => (
                IndexBatch::enumeration(m)?,
                IndexBatch::enumeration(m)?,
                IndexBatch::enumeration(n)?,
            ),
        };
        state = advance_state(
            problem,
            &state,
            &x_next,
            &x,
            &batch_g,
            &batch_jac,
            &batch_f,
            params.weights,
        )?;
        ifo += step_ifo;
        x = x_next;
        if t + 1 == x_hat_iter {
            x_hat = x.clone();
        }
    }

    Ok(RunRecord {
        algo: "storm-c".into(),
        problem: problem.name().into(),
        seed,
        hyper: Some(params.clone()),
        scgd: None,
        init_ifo,
        step_ifo,
        ifo_total: ifo,
        rows,
        x0,
        x_final: x.clone(),
        x_hat: if x_hat_iter == t_iters { x } else { x_hat },
        x_hat_iter,
        violations,
    })
}

fn fill_diagnostics<P: CompositionalProblem + ?Sized>(
    problem: &P,
    x: &Point,
    state: Option<&EstimatorState>,
    estimation_errors: bool,
    row: &mut IterRow,
) -> Result<()> {
    let phi = exact_phi(problem, x)?;
    row.obj_gap = problem.phi_star().map(|star| phi - star);
    row.grad_norm = Some(exact_grad_phi(problem, x)?.norm());
    if let (Some(state), true) = (state, estimation_errors) {
        let errs = measure_estimation_errors(problem, x, state)?;
        row.est_err_f = Some(errs.grad_sq);
        row.est_err_g = Some(errs.g_sq);
        row.est_err_jac = Some(errs.jac_sq);
    }
    Ok(())
}

/// Parameters of the two-timescale SCGD baseline.
///
/// At (1-based) iteration `k` the schedules are `alpha_k = alpha0 * k^-alpha_decay`
/// and `beta_k = min(1, beta0 * k^-beta_decay)`; the auxiliary inner-value
/// track starts at zero and the first update overwrites it when `beta_1 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScgdParams {
    /// Main step-size scale.
    pub alpha0: f64,
    /// Main step-size decay exponent (classical value 3/4).
    pub alpha_decay: f64,
    /// Inner-tracking weight scale.
    pub beta0: f64,
    /// Inner-tracking decay exponent (classical value 1/2).
    pub beta_decay: f64,
    /// Per-iteration batch sizes (same cost model as the main algorithm).
    pub steps: StepBatches,
    /// Number of update iterations.
    pub t_iters: u64,
}

impl ScgdParams {
    /// Validates positivity of scales and batch sizes.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
            ("alpha_decay", self.alpha_decay),
            ("beta_decay", self.beta_decay),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(StormError::InvalidArgument(format!(
                    "scgd parameter {name} = {v} must be finite and non-negative"
                )));
            }
        }
        if self.alpha0 <= 0.0 || self.beta0 <= 0.0 {
            return Err(StormError::InvalidArgument(
                "scgd scales alpha0 and beta0 must be positive".into(),
            ));
        }
        for (name, s) in [
            ("B^g", self.steps.b_g),
            ("B^dg", self.steps.b_jac),
            ("B^f", self.steps.b_f),
        ] {
            if s == 0 {
                return Err(StormError::InvalidArgument(format!(
                    "batch size {name} must be at least 1"
                )));
            }
        }
        Ok(())
    }
}

/// Runs the SCGD baseline: tracks the inner value with an exponential moving
/// average on its own timescale and steps along the plugged-in gradient.
///
/// ```text
/// y_{k}   = (1 - beta_k) y_{k-1} + beta_k * g(x, B^g)
/// x_next  = x - alpha_k * dg(x, B^dg)^T grad_f(y_k, B^f)
/// ```
pub fn run_scgd<P: CompositionalProblem + ?Sized>(
    problem: &P,
    params: &ScgdParams,
    seed: u64,
    x0: Option<&Point>,
    options: &RunOptions,
) -> Result<RunRecord> {
    params.validate()?;
    let t_iters = params.t_iters;
    let m = problem.inner_count();
    let n = problem.outer_count();
    let x0 = match x0 {
        Some(x) => x.clone(),
        None => problem.initial_point(),
    };

    let mut rng = RandomSource::from_seed(seed);
    let x_hat_iter = match options.output_rule {
        OutputRule::Final => t_iters,
        OutputRule::UniformRandom => {
            if t_iters == 0 {
                0
            } else {
                1 + rng.draw_index(t_iters as usize) as u64
            }
        }
    };

    let schedule = DiagnosticSchedule::new(options.cadence, t_iters);
    let mut rows = Vec::with_capacity(t_iters as usize + 1);
    let mut ifo: u64 = 0;
    let mut x = x0.clone();
    let mut x_hat = x0.clone();
    let mut y = nalgebra::DVector::zeros(problem.inner_dim());

    for t in 0..=t_iters {
        let mut row = IterRow {
            t,
            ifo,
            f_norm: None,
            gamma: None,
            step_norm: None,
            obj_gap: None,
            grad_norm: None,
            est_err_f: None,
            est_err_g: None,
            est_err_jac: None,
        };
        if schedule.is_due(t) {
            fill_diagnostics(problem, &x, None, false, &mut row)?;
            if options.include_diagnostics_ifo {
                ifo += (2 * m + 2 * n) as u64;
            }
        }
        if t == t_iters {
            rows.push(row);
            break;
        }

        let k = (t + 1) as f64;
        let alpha = params.alpha0 * k.powf(-params.alpha_decay);
        let beta = (params.beta0 * k.powf(-params.beta_decay)).min(1.0);

        let batch_g = rng.sample_batch(m, params.steps.b_g)?;
        let batch_jac = rng.sample_batch(m, params.steps.b_jac)?;
        let batch_f = rng.sample_batch(n, params.steps.b_f)?;

        y = &y * (1.0 - beta) + minibatch_g(problem, &x, &batch_g)? * beta;
        let jac = minibatch_jacobian(problem, &x, &batch_jac)?;
        let grad = jac.transpose() * minibatch_grad_f(problem, &y, &batch_f)?;
        if !grad.iter().all(|v| v.is_finite()) {
            return Err(StormError::NumericalFailure {
                iteration: t,
                message: "scgd gradient estimate became non-finite".into(),
            });
        }

        let x_next = &x - &grad * alpha;
        row.f_norm = Some(grad.norm());
        row.step_norm = Some(alpha * grad.norm());
        rows.push(row);

        ifo += params.steps.total();
        x = x_next;
        if t + 1 == x_hat_iter {
            x_hat = x.clone();
        }
    }

    Ok(RunRecord {
        algo: "scgd".into(),
        problem: problem.name().into(),
        seed,
        hyper: None,
        scgd: Some(params.clone()),
        init_ifo: 0,
        step_ifo: params.steps.total(),
        ifo_total: ifo,
        rows,
        x0,
        x_final: x.clone(),
        x_hat: if x_hat_iter == t_iters { x } else { x_hat },
        x_hat_iter,
        violations: Vec::new(),
    })
}
