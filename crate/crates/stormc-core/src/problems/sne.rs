//! Stochastic neighbor embedding as a compositional objective.
//!
//! Given conditional similarities `p_{j|i}` of `n` high-dimensional points,
//! SNE places embeddings `x_1 .. x_n` in R^d by minimizing (up to an additive
//! constant, the entropy of `p`) the KL divergence between `p` and the
//! embedding-space similarities. Flattening `x = (x_1 .. x_n)` to R^{dn}, the
//! objective is compositional with `n` components at both levels:
//!
//! ```text
//! g_i(x) = [ x ;  n e^{-|x_1 - x_i|^2} - 1, ..., n e^{-|x_n - x_i|^2} - 1 ]
//! f_j(y) = n * sum_i p_{j|i} ( |y_i - y_j|^2 + log y_{dn+i} )
//! ```
//!
//! The inner mean's tail entry `l` is the softmax denominator
//! `sum_{k != l} e^{-|x_l - x_k|^2}` — an expectation inside a logarithm,
//! which is what makes the problem nested. The composed objective equals
//!
//! ```text
//! Phi(x) = sum_{i,j} p_{j|i} |x_i - x_j|^2 + sum_i log sum_{k != i} e^{-|x_i - x_k|^2}.
//! ```
//!
//! # Partial domain
//!
//! A *sampled* tail entry `n e^{-|x_l - x_j|^2} - 1` is negative whenever the
//! two embeddings are far apart, so estimator states can present a
//! non-positive value to the logarithm. Outer oracles then return a
//! domain-violation error naming the offending coordinate instead of emitting
//! NaN; runs surface it with iteration context.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StormError};
use crate::problem::{
    check_index, check_inner_dim, check_point_dim, CompositionalProblem, InnerValue, Jacobian,
    Point,
};
use crate::sampling::RandomSource;

/// Tolerance on similarity row sums.
const ROW_SUM_TOL: f64 = 1e-12;

/// Conditional similarities `p_{j|i}` (entry `(i, j)`) of rows of `points`
/// under per-point Gaussian bandwidths, numerically stabilized by
/// max-subtraction in the exponents:
///
/// ```text
/// p_{j|i} = exp(-|z_i - z_j|^2 / 2 sigma_i^2) / sum_{k != i} exp(-|z_i - z_k|^2 / 2 sigma_i^2).
/// ```
pub fn conditional_similarities(points: &DMatrix<f64>, sigmas: &[f64]) -> Result<DMatrix<f64>> {
    let n = points.nrows();
    if n < 2 {
        return Err(StormError::InvalidProblem(format!(
            "similarities need at least 2 points (got {n})"
        )));
    }
    if sigmas.len() != n {
        return Err(StormError::InvalidProblem(format!(
            "{} bandwidths for {} points",
            sigmas.len(),
            n
        )));
    }
    if sigmas.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(StormError::InvalidProblem(
            "bandwidths must be positive".into(),
        ));
    }
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut logits = vec![f64::NEG_INFINITY; n];
        let mut max_logit = f64::NEG_INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            let diff = points.row(i) - points.row(j);
            let logit = -diff.norm_squared() / (2.0 * sigmas[i] * sigmas[i]);
            logits[j] = logit;
            max_logit = max_logit.max(logit);
        }
        let mut total = 0.0;
        for j in 0..n {
            if j != i {
                let w = (logits[j] - max_logit).exp();
                p[(i, j)] = w;
                total += w;
            }
        }
        for j in 0..n {
            p[(i, j)] /= total;
        }
    }
    Ok(p)
}

/// SNE embedding problem over fixed conditional similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct Sne {
    /// Similarities, entry `(i, j)` = `p_{j|i}`; zero diagonal, rows sum to 1.
    p: DMatrix<f64>,
    /// Embedding dimension `d`.
    embed_dim: usize,
    /// Deterministic starting embedding (small seeded spread; the all-zeros
    /// embedding is an exact stationary point by symmetry).
    x0: Point,
}

impl Sne {
    /// Builds the problem from a validated similarity matrix.
    pub fn new(p: DMatrix<f64>, embed_dim: usize, x0: Point) -> Result<Self> {
        let n = p.nrows();
        if n < 2 || p.ncols() != n {
            return Err(StormError::InvalidProblem(format!(
                "similarity matrix must be square with n >= 2 (got {} x {})",
                p.nrows(),
                p.ncols()
            )));
        }
        if embed_dim == 0 {
            return Err(StormError::InvalidProblem(
                "embedding dimension must be at least 1".into(),
            ));
        }
        for i in 0..n {
            if p[(i, i)] != 0.0 {
                return Err(StormError::InvalidProblem(format!(
                    "self-similarity p[{i},{i}] must be zero"
                )));
            }
            let row = p.row(i);
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(StormError::InvalidProblem(format!(
                    "similarity row {i} has negative or non-finite entries"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(StormError::InvalidProblem(format!(
                    "similarity row {i} sums to {sum}, expected 1"
                )));
            }
        }
        if x0.len() != embed_dim * n {
            return Err(StormError::ShapeMismatch(format!(
                "starting embedding has dimension {}, expected {}",
                x0.len(),
                embed_dim * n
            )));
        }
        Ok(Self { p, embed_dim, x0 })
    }

    /// Builds similarities from data points and a small seeded starting
    /// embedding, then assembles the problem.
    pub fn from_points(
        points: &DMatrix<f64>,
        sigmas: &[f64],
        embed_dim: usize,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        let p = conditional_similarities(points, sigmas)?;
        let n = points.nrows();
        let x0 = DVector::from_fn(embed_dim * n, |_, _| 0.1 * rng.standard_normal());
        Self::new(p, embed_dim, x0)
    }

    /// Generates a clustered instance: `n` points in three Gaussian clusters
    /// in R^5 (unit bandwidths), embedded into `embed_dim` dimensions.
    pub fn generate(n: usize, embed_dim: usize, rng: &mut RandomSource) -> Result<Self> {
        if n < 2 {
            return Err(StormError::InvalidProblem(format!(
                "generation needs at least 2 points (got {n})"
            )));
        }
        let data_dim = 5;
        let mut points = DMatrix::zeros(n, data_dim);
        for i in 0..n {
            let cluster = i % 3;
            for k in 0..data_dim {
                let center = if k == cluster { 4.0 } else { 0.0 };
                points[(i, k)] = center + 0.5 * rng.standard_normal();
            }
        }
        let sigmas = vec![1.0; n];
        Self::from_points(&points, &sigmas, embed_dim, rng)
    }

    /// Number of embedded points.
    pub fn points(&self) -> usize {
        self.p.nrows()
    }

    /// The similarity matrix.
    pub fn similarities(&self) -> &DMatrix<f64> {
        &self.p
    }

    /// Embedding block `x_l` of a flattened decision vector.
    fn block<'a>(&self, x: &'a Point, l: usize) -> nalgebra::DVectorView<'a, f64> {
        x.rows(l * self.embed_dim, self.embed_dim)
    }

    /// Checks the logarithm's argument, reporting the offending coordinate.
    fn check_tail(&self, component: usize, coordinate: usize, value: f64) -> Result<f64> {
        if value <= 0.0 {
            return Err(StormError::DomainViolation {
                component,
                coordinate,
                value,
            });
        }
        Ok(value)
    }
}

impl CompositionalProblem for Sne {
    fn decision_dim(&self) -> usize {
        self.embed_dim * self.points()
    }

    fn inner_dim(&self) -> usize {
        self.decision_dim() + self.points()
    }

    fn inner_count(&self) -> usize {
        self.points()
    }

    fn outer_count(&self) -> usize {
        self.points()
    }

    fn inner_value(&self, i: usize, x: &Point) -> Result<InnerValue> {
        check_index(i, self.inner_count())?;
        check_point_dim(self, x)?;
        let n = self.points();
        let dn = self.decision_dim();
        let mut y = InnerValue::zeros(dn + n);
        y.rows_mut(0, dn).copy_from(x);
        let xi = self.block(x, i);
        for l in 0..n {
            let dist_sq = (self.block(x, l) - xi).norm_squared();
            y[dn + l] = n as f64 * (-dist_sq).exp() - 1.0;
        }
        Ok(y)
    }

    fn inner_jacobian(&self, i: usize, x: &Point) -> Result<Jacobian> {
        check_index(i, self.inner_count())?;
        check_point_dim(self, x)?;
        let n = self.points();
        let d = self.embed_dim;
        let dn = self.decision_dim();
        let mut jac = DMatrix::zeros(dn + n, dn);
        for k in 0..dn {
            jac[(k, k)] = 1.0;
        }
        let xi = self.block(x, i);
        for l in 0..n {
            if l == i {
                continue; // distance to self is identically zero
            }
            let diff = self.block(x, l) - xi;
            let weight = -2.0 * n as f64 * (-diff.norm_squared()).exp();
            for k in 0..d {
                jac[(dn + l, l * d + k)] = weight * diff[k];
                jac[(dn + l, i * d + k)] = -weight * diff[k];
            }
        }
        Ok(jac)
    }

    fn outer_value(&self, j: usize, y: &InnerValue) -> Result<f64> {
        check_index(j, self.outer_count())?;
        check_inner_dim(self, y)?;
        let n = self.points();
        let dn = self.decision_dim();
        let yj = self.block(y, j);
        let mut value = 0.0;
        for i in 0..n {
            let weight = self.p[(i, j)];
            if weight == 0.0 {
                continue;
            }
            let tail = self.check_tail(j, dn + i, y[dn + i])?;
            let dist_sq = (self.block(y, i) - yj).norm_squared();
            value += weight * (dist_sq + tail.ln());
        }
        Ok(n as f64 * value)
    }

    fn outer_gradient(&self, j: usize, y: &InnerValue) -> Result<InnerValue> {
        check_index(j, self.outer_count())?;
        check_inner_dim(self, y)?;
        let n = self.points();
        let d = self.embed_dim;
        let dn = self.decision_dim();
        let yj = self.block(y, j).into_owned();
        let mut grad = InnerValue::zeros(dn + n);
        for i in 0..n {
            let weight = self.p[(i, j)];
            if weight == 0.0 {
                continue;
            }
            let tail = self.check_tail(j, dn + i, y[dn + i])?;
            let diff = self.block(y, i) - &yj;
            let scale = 2.0 * n as f64 * weight;
            for k in 0..d {
                grad[i * d + k] += scale * diff[k];
                grad[j * d + k] -= scale * diff[k];
            }
            grad[dn + i] = n as f64 * weight / tail;
        }
        Ok(grad)
    }

    fn name(&self) -> &str {
        "sne"
    }

    fn initial_point(&self) -> Point {
        self.x0.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{exact_g, exact_grad_phi, exact_jacobian, exact_phi};
    use approx::assert_relative_eq;

    fn pair_problem() -> Sne {
        // n = 2, d = 1: each point's only neighbor is the other.
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        Sne::new(p, 1, DVector::from_row_slice(&[0.0, 0.0])).unwrap()
    }

    #[test]
    fn two_point_similarities_are_deterministic() {
        let points = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]);
        let p = conditional_similarities(&points, &[1.0, 2.0]).unwrap();
        assert_eq!(p[(0, 1)], 1.0);
        assert_eq!(p[(1, 0)], 1.0);
        assert_eq!(p[(0, 0)], 0.0);
    }

    #[test]
    fn equidistant_triple_splits_evenly() {
        // Equilateral triangle in the plane.
        let h = 3.0_f64.sqrt() / 2.0;
        let points = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.5, h]);
        let p = conditional_similarities(&points, &[0.7, 0.7, 0.7]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_relative_eq!(p[(i, j)], 0.5, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn stabilized_similarities_match_naive_formula() {
        let mut rng = RandomSource::from_seed(9);
        let points = DMatrix::from_fn(5, 3, |_, _| rng.standard_normal());
        let sigmas = [0.8, 1.0, 1.3, 0.9, 1.1];
        let p = conditional_similarities(&points, &sigmas).unwrap();
        for i in 0..5 {
            let mut weights = [0.0; 5];
            let mut total = 0.0;
            for j in 0..5 {
                if j != i {
                    let diff = points.row(i) - points.row(j);
                    weights[j] =
                        (-diff.norm_squared() / (2.0 * sigmas[i] * sigmas[i])).exp();
                    total += weights[j];
                }
            }
            for j in 0..5 {
                assert_relative_eq!(p[(i, j)], weights[j] / total, max_relative = 1e-10);
            }
            assert_relative_eq!(p.row(i).iter().sum::<f64>(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn coincident_pair_tail_is_one() {
        let problem = pair_problem();
        let x = DVector::from_row_slice(&[0.0, 0.0]);
        let y = problem.inner_value(0, &x).unwrap();
        // n*e^0 - 1 = 1 for both tail entries.
        assert_eq!(y[2], 1.0);
        assert_eq!(y[3], 1.0);
    }

    #[test]
    fn composition_matches_display_objective() {
        let mut rng = RandomSource::from_seed(10);
        let problem = Sne::generate(7, 2, &mut rng).unwrap();
        let x = problem.initial_point();
        let n = problem.points();
        let d = 2;
        let mut direct = 0.0;
        for i in 0..n {
            let xi = x.rows(i * d, d);
            let mut denom = 0.0;
            for k in 0..n {
                if k != i {
                    denom += (-(x.rows(k * d, d) - xi).norm_squared()).exp();
                }
            }
            direct += denom.ln();
            for j in 0..n {
                direct +=
                    problem.similarities()[(i, j)] * (x.rows(j * d, d) - xi).norm_squared();
            }
        }
        assert_relative_eq!(
            exact_phi(&problem, &x).unwrap(),
            direct,
            max_relative = 1e-10
        );
    }

    #[test]
    fn outer_gradient_blocks_match_finite_differences() {
        let mut rng = RandomSource::from_seed(11);
        let problem = Sne::generate(4, 2, &mut rng).unwrap();
        let x = problem.initial_point();
        let y = exact_g(&problem, &x).unwrap();
        let j = 1;
        let grad = problem.outer_gradient(j, &y).unwrap();
        let h = 1e-6;
        let mut y_probe = y.clone();
        for k in 0..y.len() {
            y_probe[k] = y[k] + h;
            let plus = problem.outer_value(j, &y_probe).unwrap();
            y_probe[k] = y[k] - h;
            let minus = problem.outer_value(j, &y_probe).unwrap();
            y_probe[k] = y[k];
            let fd = (plus - minus) / (2.0 * h);
            assert_relative_eq!(grad[k], fd, epsilon = 1e-5, max_relative = 1e-5);
        }
        // The embedding block l != j has the closed form 2 n p_{j|l} (y_l - y_j).
        let l = 2;
        let expected = (y.rows(l * 2, 2) - y.rows(j * 2, 2))
            * (2.0 * problem.points() as f64 * problem.similarities()[(l, j)]);
        assert_relative_eq!(
            grad.rows(l * 2, 2).into_owned(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn sparse_chain_rule_assembly_matches_dense_product() {
        let mut rng = RandomSource::from_seed(12);
        let problem = Sne::generate(4, 2, &mut rng).unwrap();
        let x = problem.initial_point();
        let n = problem.points();
        let d = 2;
        let dn = n * d;
        let y = exact_g(&problem, &x).unwrap();
        for i in 0..n {
            for j in 0..n {
                let grad_f = problem.outer_gradient(j, &y).unwrap();
                let dense = problem.inner_jacobian(i, &x).unwrap().transpose() * &grad_f;
                // Sparse assembly: identity head plus the two rank-structured
                // tail contributions per distance row.
                let mut sparse = grad_f.rows(0, dn).into_owned();
                for l in 0..n {
                    if l == i {
                        continue;
                    }
                    let diff = (x.rows(l * d, d) - x.rows(i * d, d)).into_owned();
                    let weight = -2.0 * n as f64 * (-diff.norm_squared()).exp();
                    let tail_sens = grad_f[dn + l];
                    for k in 0..d {
                        sparse[l * d + k] += tail_sens * weight * diff[k];
                        sparse[i * d + k] -= tail_sens * weight * diff[k];
                    }
                }
                assert_relative_eq!(sparse, dense, max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_gradient_matches_finite_differences_of_phi() {
        let mut rng = RandomSource::from_seed(13);
        let problem = Sne::generate(5, 2, &mut rng).unwrap();
        let x = problem.initial_point();
        let grad = exact_grad_phi(&problem, &x).unwrap();
        let h = 1e-6;
        let mut probe = x.clone();
        for k in 0..x.len() {
            probe[k] = x[k] + h;
            let plus = exact_phi(&problem, &probe).unwrap();
            probe[k] = x[k] - h;
            let minus = exact_phi(&problem, &probe).unwrap();
            probe[k] = x[k];
            assert_relative_eq!(
                grad[k],
                (plus - minus) / (2.0 * h),
                epsilon = 1e-5,
                max_relative = 1e-5
            );
        }
        // Jacobian of g_i is consistent with the value oracle's structure.
        let jac = exact_jacobian(&problem, &x).unwrap();
        assert_eq!(jac.nrows(), problem.inner_dim());
        assert_eq!(jac.ncols(), problem.decision_dim());
    }

    #[test]
    fn nonpositive_tail_raises_domain_violation() {
        let problem = pair_problem();
        // Valid head, tail entry for point 1 pushed negative.
        let y = DVector::from_row_slice(&[0.3, -0.4, 0.9, -0.5]);
        let err = problem.outer_value(0, &y).unwrap_err();
        match err {
            StormError::DomainViolation {
                component,
                coordinate,
                value,
            } => {
                assert_eq!(component, 0);
                assert_eq!(coordinate, 3);
                assert_eq!(value, -0.5);
            }
            other => panic!("expected domain violation, got {other:?}"),
        }
        assert!(problem.outer_gradient(0, &y).is_err());
        // The other outer component only reads the positive tail entry.
        assert!(problem.outer_value(1, &y).is_ok());
    }

    #[test]
    fn rejects_malformed_similarities() {
        let x0 = DVector::zeros(2);
        let bad_diag = DMatrix::from_row_slice(2, 2, &[0.1, 0.9, 1.0, 0.0]);
        assert!(Sne::new(bad_diag, 1, x0.clone()).is_err());
        let bad_sum = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 1.0, 0.0]);
        assert!(Sne::new(bad_sum, 1, x0.clone()).is_err());
        let good = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(Sne::new(good.clone(), 0, x0).is_err());
        assert!(Sne::new(good, 1, DVector::zeros(5)).is_err());
        assert!(conditional_similarities(&DMatrix::zeros(1, 2), &[1.0]).is_err());
        assert!(conditional_similarities(&DMatrix::zeros(3, 2), &[1.0, -1.0, 1.0]).is_err());
    }
}
