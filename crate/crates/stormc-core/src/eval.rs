//! Minibatch and exact (full finite-sum) evaluation of problem oracles.
//!
//! Minibatch means count duplicate indices with multiplicity, so a batch drawn
//! with replacement yields an unbiased estimate of the exact mean with variance
//! proportional to `1/B`. The exact operations are defined as the minibatch
//! mean over the full-enumeration batch — by construction `exact_g` and
//! `minibatch_g` over `[0..m)` agree bit for bit, and likewise for Jacobians
//! and outer gradients.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::problem::{check_inner_dim, check_point_dim, CompositionalProblem, InnerValue, Jacobian, Point};
use crate::sampling::IndexBatch;

/// Minibatch estimate of the inner value: `(1/|B|) * sum_{j in B} g_j(x)`.
pub fn minibatch_g<P: CompositionalProblem + ?Sized>(
    problem: &P,
    x: &Point,
    batch: &IndexBatch,
) -> Result<InnerValue> {
    check_point_dim(problem, x)?;
    let mut acc = DVector::zeros(problem.inner_dim());
    for j in batch.iter() {
        acc += problem.inner_value(j, x)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Minibatch estimate of the inner Jacobian: `(1/|B|) * sum_{j in B} dg_j(x)`.
pub fn minibatch_jacobian<P: CompositionalProblem + ?Sized>(
    problem: &P,
    x: &Point,
    batch: &IndexBatch,
) -> Result<Jacobian> {
    check_point_dim(problem, x)?;
    let mut acc = DMatrix::zeros(problem.inner_dim(), problem.decision_dim());
    for j in batch.iter() {
        acc += problem.inner_jacobian(j, x)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Minibatch estimate of the outer gradient: `(1/|B|) * sum_{i in B} grad f_i(y)`.
pub fn minibatch_grad_f<P: CompositionalProblem + ?Sized>(
    problem: &P,
    y: &InnerValue,
    batch: &IndexBatch,
) -> Result<InnerValue> {
    check_inner_dim(problem, y)?;
    let mut acc = DVector::zeros(problem.inner_dim());
    for i in batch.iter() {
        acc += problem.outer_gradient(i, y)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Minibatch estimate of the outer value: `(1/|B|) * sum_{i in B} f_i(y)`.
pub fn minibatch_f<P: CompositionalProblem + ?Sized>(
    problem: &P,
    y: &InnerValue,
    batch: &IndexBatch,
) -> Result<f64> {
    check_inner_dim(problem, y)?;
    let mut acc = 0.0;
    for i in batch.iter() {
        acc += problem.outer_value(i, y)?;
    }
    Ok(acc / batch.len() as f64)
}

/// Exact inner value `g(x)`: the mean of all `m` components.
pub fn exact_g<P: CompositionalProblem + ?Sized>(problem: &P, x: &Point) -> Result<InnerValue> {
    minibatch_g(problem, x, &IndexBatch::enumeration(problem.inner_count())?)
}

/// Exact inner Jacobian `dg(x)`: the mean of all `m` component Jacobians.
pub fn exact_jacobian<P: CompositionalProblem + ?Sized>(problem: &P, x: &Point) -> Result<Jacobian> {
    minibatch_jacobian(problem, x, &IndexBatch::enumeration(problem.inner_count())?)
}

/// Exact outer gradient `grad f(y)`: the mean of all `n` component gradients.
pub fn exact_grad_f<P: CompositionalProblem + ?Sized>(problem: &P, y: &InnerValue) -> Result<InnerValue> {
    minibatch_grad_f(problem, y, &IndexBatch::enumeration(problem.outer_count())?)
}

/// Exact outer value `f(y)`: the mean of all `n` component values.
pub fn exact_f<P: CompositionalProblem + ?Sized>(problem: &P, y: &InnerValue) -> Result<f64> {
    minibatch_f(problem, y, &IndexBatch::enumeration(problem.outer_count())?)
}

/// Exact objective `Phi(x) = f(g(x))`.
pub fn exact_phi<P: CompositionalProblem + ?Sized>(problem: &P, x: &Point) -> Result<f64> {
    let y = exact_g(problem, x)?;
    exact_f(problem, &y)
}

/// Exact gradient via the chain rule: `grad Phi(x) = dg(x)^T * grad f(g(x))`.
pub fn exact_grad_phi<P: CompositionalProblem + ?Sized>(problem: &P, x: &Point) -> Result<Point> {
    let y = exact_g(problem, x)?;
    let jac = exact_jacobian(problem, x)?;
    let gf = exact_grad_f(problem, &y)?;
    Ok(jac.transpose() * gf)
}
