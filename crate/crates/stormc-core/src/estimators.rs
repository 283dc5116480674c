//! Recursive-momentum (STORM-style) estimators for the three tracked
//! quantities of a compositional run.
//!
//! A run maintains three coupled estimates, all driven by the same recursion:
//!
//! ```text
//! g_t  tracks g(x_t)         (inner value,      updated with batch B^g)
//! G_t  tracks dg(x_t)        (inner Jacobian,   updated with batch B^dg)
//! F_t  tracks grad Phi(x_t)  (composed gradient, updated with batch B^f)
//! ```
//!
//! For a generic quantity `q` with minibatch oracle `q(x, B)`, the recursion is
//!
//! ```text
//! q_{t+1} = (1 - a) * q_t + a * q(x_{t+1}, B) + (1 - a) * (q(x_{t+1}, B) - q(x_t, B))
//! ```
//!
//! with the *same* batch `B` evaluated at both points — the correlated
//! difference term is what cancels sampling noise as steps shrink. At `a = 1`
//! the recursion degenerates to the plain minibatch estimate at the new point.
//!
//! The composed-gradient update feeds the freshly updated `g_{t+1}` and
//! `G_{t+1}` into the "new" sample and the previous `g_t`, `G_t` into the
//! "old" sample, sharing one outer-component batch:
//!
//! ```text
//! F_{t+1} = (1 - a) F_t + a * G_{t+1}^T grad_f(g_{t+1}, B^f)
//!                       + (1 - a) * (G_{t+1}^T grad_f(g_{t+1}, B^f) - G_t^T grad_f(g_t, B^f))
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StormError};
use crate::eval::{minibatch_g, minibatch_grad_f, minibatch_jacobian};
use crate::problem::{CompositionalProblem, InnerValue, Jacobian, Point};
use crate::sampling::{IndexBatch, RandomSource};

/// Momentum weights for the three estimators, each in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MomentumWeights {
    /// Weight for the inner-value estimate `g_t`.
    pub a_g: f64,
    /// Weight for the Jacobian estimate `G_t`.
    pub a_jac: f64,
    /// Weight for the composed-gradient estimate `F_t`.
    pub a_f: f64,
}

impl MomentumWeights {
    /// Uniform weights `a_g = a_jac = a_f = a`.
    pub fn uniform(a: f64) -> Self {
        Self {
            a_g: a,
            a_jac: a,
            a_f: a,
        }
    }

    /// Validates that every weight lies in `(0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("a_g", self.a_g), ("a_jac", self.a_jac), ("a_f", self.a_f)] {
            check_momentum(name, a)?;
        }
        Ok(())
    }
}

fn check_momentum(name: &str, a: f64) -> Result<()> {
    if !a.is_finite() || a <= 0.0 || a > 1.0 {
        return Err(StormError::InvalidArgument(format!(
            "momentum weight {name} = {a} outside (0, 1]"
        )));
    }
    Ok(())
}

/// The three coupled estimates carried across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    /// `g_t`, tracking the inner value `g(x_t)`.
    pub g: InnerValue,
    /// `G_t`, tracking the inner Jacobian `dg(x_t)`.
    pub jac: Jacobian,
    /// `F_t`, tracking the composed gradient `grad Phi(x_t)`.
    pub grad: Point,
}

/// One recursive-momentum update for a vector-valued quantity.
///
/// `prev` is the running estimate, `at_new`/`at_old` the minibatch values of
/// the tracked quantity at the new and old point — computed with the same
/// batch. Shapes must agree; `a` must lie in `(0, 1]`.
pub fn storm_recursion_vec(
    prev: &DVector<f64>,
    at_new: &DVector<f64>,
    at_old: &DVector<f64>,
    a: f64,
) -> Result<DVector<f64>> {
    check_momentum("a", a)?;
    if prev.len() != at_new.len() || prev.len() != at_old.len() {
        return Err(StormError::ShapeMismatch(format!(
            "storm recursion inputs of lengths {}, {}, {}",
            prev.len(),
            at_new.len(),
            at_old.len()
        )));
    }
    Ok(prev * (1.0 - a) + at_new * a + (at_new - at_old) * (1.0 - a))
}

/// One recursive-momentum update for a matrix-valued quantity (same recursion
/// as [`storm_recursion_vec`], entry-wise).
pub fn storm_recursion_mat(
    prev: &DMatrix<f64>,
    at_new: &DMatrix<f64>,
    at_old: &DMatrix<f64>,
    a: f64,
) -> Result<DMatrix<f64>> {
    check_momentum("a", a)?;
    if prev.shape() != at_new.shape() || prev.shape() != at_old.shape() {
        return Err(StormError::ShapeMismatch(format!(
            "storm recursion inputs of shapes {:?}, {:?}, {:?}",
            prev.shape(),
            at_new.shape(),
            at_old.shape()
        )));
    }
    Ok(prev * (1.0 - a) + at_new * a + (at_new - at_old) * (1.0 - a))
}

/// Initial batch sizes for the three estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct InitBatches {
    /// Inner-value batch size `S^g`.
    pub s_g: usize,
    /// Jacobian batch size `S^dg`.
    pub s_jac: usize,
    /// Outer-gradient batch size `S^f`.
    pub s_f: usize,
}

impl InitBatches {
    /// Uniform sizes `S^g = S^dg = S^f = s`.
    pub fn uniform(s: usize) -> Self {
        Self {
            s_g: s,
            s_jac: s,
            s_f: s,
        }
    }

    /// Total oracle calls consumed by initialization.
    pub fn total(&self) -> u64 {
        self.s_g as u64 + self.s_jac as u64 + self.s_f as u64
    }
}

/// Builds the initial estimates at `x0` from three independent batches:
///
/// ```text
/// g_0 = g(x0, S^g),   G_0 = dg(x0, S^dg),   F_0 = G_0^T * grad_f(g_0, S^f)
/// ```
///
/// Draw order is pinned (inner values, then Jacobian, then outer gradient) so
/// seeded runs replay exactly. Returns the state and the oracle calls spent.
pub fn init_state<P: CompositionalProblem + ?Sized>(
    problem: &P,
    x0: &Point,
    sizes: InitBatches,
    rng: &mut RandomSource,
) -> Result<(EstimatorState, u64)> {
    let m = problem.inner_count();
    let n = problem.outer_count();
    let batch_g = rng.sample_batch(m, sizes.s_g)?;
    let batch_jac = rng.sample_batch(m, sizes.s_jac)?;
    let batch_f = rng.sample_batch(n, sizes.s_f)?;
    let state = init_state_with_batches(problem, x0, &batch_g, &batch_jac, &batch_f)?;
    Ok((state, sizes.total()))
}

/// [`init_state`] with caller-supplied batches (full-information mode passes
/// enumeration batches here, which makes the initial state exact).
pub fn init_state_with_batches<P: CompositionalProblem + ?Sized>(
    problem: &P,
    x0: &Point,
    batch_g: &IndexBatch,
    batch_jac: &IndexBatch,
    batch_f: &IndexBatch,
) -> Result<EstimatorState> {
    let g = minibatch_g(problem, x0, batch_g)?;
    let jac = minibatch_jacobian(problem, x0, batch_jac)?;
    let grad = jac.transpose() * minibatch_grad_f(problem, &g, batch_f)?;
    Ok(EstimatorState { g, jac, grad })
}

/// Updates the inner-value estimate with one shared batch at both points.
pub fn update_g<P: CompositionalProblem + ?Sized>(
    problem: &P,
    prev: &InnerValue,
    x_new: &Point,
    x_old: &Point,
    batch: &IndexBatch,
    a: f64,
) -> Result<InnerValue> {
    let at_new = minibatch_g(problem, x_new, batch)?;
    let at_old = minibatch_g(problem, x_old, batch)?;
    storm_recursion_vec(prev, &at_new, &at_old, a)
}

/// Updates the Jacobian estimate with one shared batch at both points.
pub fn update_jacobian<P: CompositionalProblem + ?Sized>(
    problem: &P,
    prev: &Jacobian,
    x_new: &Point,
    x_old: &Point,
    batch: &IndexBatch,
    a: f64,
) -> Result<Jacobian> {
    let at_new = minibatch_jacobian(problem, x_new, batch)?;
    let at_old = minibatch_jacobian(problem, x_old, batch)?;
    storm_recursion_mat(prev, &at_new, &at_old, a)
}

/// Updates the composed-gradient estimate. The "new" sample composes the
/// freshly updated `(g_new, jac_new)`, the "old" sample the previous
/// `(g_old, jac_old)`, both through the same outer-component batch.
#[allow(clippy::too_many_arguments)]
pub fn update_grad<P: CompositionalProblem + ?Sized>(
    problem: &P,
    prev: &Point,
    jac_new: &Jacobian,
    g_new: &InnerValue,
    jac_old: &Jacobian,
    g_old: &InnerValue,
    batch: &IndexBatch,
    a: f64,
) -> Result<Point> {
    let at_new = jac_new.transpose() * minibatch_grad_f(problem, g_new, batch)?;
    let at_old = jac_old.transpose() * minibatch_grad_f(problem, g_old, batch)?;
    storm_recursion_vec(prev, &at_new, &at_old, a)
}

/// Advances the full state from `x_old` to `x_new` using three caller-supplied
/// batches, in the pinned order g, Jacobian, composed gradient.
pub fn advance_state<P: CompositionalProblem + ?Sized>(
    problem: &P,
    state: &EstimatorState,
    x_new: &Point,
    x_old: &Point,
    batch_g: &IndexBatch,
    batch_jac: &IndexBatch,
    batch_f: &IndexBatch,
    weights: MomentumWeights,
) -> Result<EstimatorState> {
    let g = update_g(problem, &state.g, x_new, x_old, batch_g, weights.a_g)?;
    let jac = update_jacobian(problem, &state.jac, x_new, x_old, batch_jac, weights.a_jac)?;
    let grad = update_grad(
        problem, &state.grad, &jac, &g, &state.jac, &state.g, batch_f, weights.a_f,
    )?;
    Ok(EstimatorState { g, jac, grad })
}
