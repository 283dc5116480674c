//! Problem-oracle core: the nested finite-sum objective and its component oracles.
//!
//! The objective family is
//!
//! ```text
//! Phi(x) = f(g(x)),   f(y) = (1/n) * sum_i f_i(y),   g(x) = (1/m) * sum_j g_j(x),
//! ```
//!
//! with `x` in R^d, inner maps `g_j : R^d -> R^l`, and outer components
//! `f_i : R^l -> R`. Everything downstream (estimators, optimizer, planner,
//! diagnostics) talks to a problem exclusively through [`CompositionalProblem`]:
//! per-component values `g_j(x)`, per-component Jacobians `dg_j(x)` (an `l x d`
//! matrix), outer values `f_i(y)` and outer gradients `grad f_i(y)`.
//!
//! The full gradient follows the chain rule through the *mean* inner map:
//!
//! ```text
//! grad Phi(x) = dg(x)^T * grad f(g(x)),    dg(x) = (1/m) * sum_j dg_j(x).
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StormError};

/// Decision vector `x` in R^d.
pub type Point = DVector<f64>;

/// Inner-map value `y` in R^l (a value of `g` or an estimate of one).
pub type InnerValue = DVector<f64>;

/// Jacobian of an inner map: an `l x d` matrix (rows = inner coordinates).
pub type Jacobian = DMatrix<f64>;

/// A two-level finite-sum objective `Phi(x) = f(g(x))` exposed through
/// per-component oracles.
///
/// Index conventions: components are 0-based in code (`j in 0..inner_count()`,
/// `i in 0..outer_count()`); serialized artifacts use 1-based indices (see
/// [`crate::sampling::IndexBatch`]).
///
/// One oracle call = one component evaluation; the cost model used by the
/// optimizer counts exactly one IFO unit per `inner_value`, `inner_jacobian`
/// or `outer_gradient` call on a sampled component.
pub trait CompositionalProblem {
    /// Dimension `d` of the decision variable.
    fn decision_dim(&self) -> usize;

    /// Dimension `l` of the inner-map value.
    fn inner_dim(&self) -> usize;

    /// Number `m` of inner components `g_j`.
    fn inner_count(&self) -> usize;

    /// Number `n` of outer components `f_i`.
    fn outer_count(&self) -> usize;

    /// Value of the inner component `g_j(x)`, a vector in R^l.
    fn inner_value(&self, j: usize, x: &Point) -> Result<InnerValue>;

    /// Jacobian of the inner component `dg_j(x)`, an `l x d` matrix.
    fn inner_jacobian(&self, j: usize, x: &Point) -> Result<Jacobian>;

    /// Value of the outer component `f_i(y)`.
    fn outer_value(&self, i: usize, y: &InnerValue) -> Result<f64>;

    /// Gradient of the outer component `grad f_i(y)`, a vector in R^l.
    fn outer_gradient(&self, i: usize, y: &InnerValue) -> Result<InnerValue>;

    /// Short stable identifier used in metrics files and reports.
    fn name(&self) -> &str;

    /// Known optimal value `Phi*`, when the problem has one in closed form.
    /// Used for the `obj_gap` diagnostic column; `None` leaves it empty.
    fn phi_star(&self) -> Option<f64> {
        None
    }

    /// Natural starting point for optimization runs (defaults to the origin).
    fn initial_point(&self) -> Point {
        DVector::zeros(self.decision_dim())
    }
}

/// Validates that `x` has the problem's decision dimension.
pub(crate) fn check_point_dim<P: CompositionalProblem + ?Sized>(
    problem: &P,
    x: &Point,
) -> Result<()> {
    if x.len() != problem.decision_dim() {
        return Err(StormError::ShapeMismatch(format!(
            "point has dimension {}, problem '{}' expects {}",
            x.len(),
            problem.name(),
            problem.decision_dim()
        )));
    }
    Ok(())
}

/// Validates that `y` has the problem's inner dimension.
pub(crate) fn check_inner_dim<P: CompositionalProblem + ?Sized>(
    problem: &P,
    y: &InnerValue,
) -> Result<()> {
    if y.len() != problem.inner_dim() {
        return Err(StormError::ShapeMismatch(format!(
            "inner value has dimension {}, problem '{}' expects {}",
            y.len(),
            problem.name(),
            problem.inner_dim()
        )));
    }
    Ok(())
}

/// Validates a component index against a pool size.
pub(crate) fn check_index(index: usize, pool: usize) -> Result<()> {
    if index >= pool {
        return Err(StormError::IndexOutOfRange { index, pool });
    }
    Ok(())
}
