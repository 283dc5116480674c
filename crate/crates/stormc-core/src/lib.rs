//! Variance-reduced momentum optimization for nested finite-sum objectives.
//!
//! This crate implements an optimizer for *compositional* problems
//!
//! ```text
//! min_x Phi(x) = f(g(x)),   g(x) = (1/m) sum_j g_j(x),   f(y) = (1/n) sum_i f_i(y),
//! ```
//!
//! where only component oracles (`g_j`, their Jacobians, and `grad f_i`) are
//! available through sampling. The difficulty relative to ordinary finite-sum
//! optimization is that a minibatch estimate of `grad f(g(x))` is biased: the
//! inner mean `g(x)` sits inside the nonlinear outer map. The optimizer keeps
//! three coupled recursive-momentum (STORM-style) estimators — inner value,
//! inner Jacobian, and composed gradient — whose correlated correction terms
//! cancel that bias to the order the analysis needs, with a single loop, no
//! checkpoints, and no mega-batches.
//!
//! # Module map
//!
//! - [`problem`]: the [`problem::CompositionalProblem`] oracle trait and shared
//!   linear-algebra types.
//! - [`sampling`]: seeded RNG streams and with-replacement index batches.
//! - [`eval`]: minibatch and full-enumeration means of the component oracles.
//! - [`estimators`]: the three-track momentum recursion and its initialization.
//! - [`optimizer`]: the normalized-step main loop ([`optimizer::run_storm_c`])
//!   and a two-timescale SCGD baseline, both producing dense [`optimizer::RunRecord`]s
//!   under one oracle-call cost model.
//! - [`planner`]: turns regularity/variance constants into runnable
//!   hyper-parameters — exact theory-derived plans, order-level plans, and the
//!   variance-condition feasibility check.
//! - [`problems`]: ready-made benchmark instances (portfolio selection, MDP
//!   value evaluation, stochastic neighbor embedding) plus an analytically
//!   solvable calibration fixture.
//! - [`diagnostics`]: gradient checks, exact estimation-error measurement, and
//!   statistical verification of the planner's error-sum and stationarity
//!   bounds.
//!
//! # Quick start
//!
//! ```
//! use stormc_core::optimizer::{run_storm_c, RunOptions};
//! use stormc_core::planner::{plan_order, PlanCoefficients};
//! use stormc_core::problems::QuadToy;
//!
//! let problem = QuadToy::new();
//! // Order-level plan at eps = 0.1: a = 0.1, B = S = 10, T = 100.
//! let plan = plan_order(0.1, PlanCoefficients::default(), 0.5).unwrap();
//! let record = run_storm_c(&problem, &plan.hyper, 7, None, &RunOptions::default()).unwrap();
//! assert!(record.violations.is_empty());
//! ```

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod optimizer;
pub mod planner;
pub mod problem;
pub mod problems;
pub mod sampling;

pub use error::{Result, StormError};
pub use estimators::{EstimatorState, InitBatches, MomentumWeights};
pub use optimizer::{
    run_scgd, run_storm_c, EvalMode, HyperParams, IterRow, OutputRule, RunOptions, RunRecord,
    ScgdParams, StepBatches,
};
pub use planner::{ParameterPlan, PlanMode, ProblemConstants};
pub use problem::{CompositionalProblem, InnerValue, Jacobian, Point};
pub use sampling::{IndexBatch, RandomSource};
