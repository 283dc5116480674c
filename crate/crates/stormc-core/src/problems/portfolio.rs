//! Risk-averse portfolio selection as a compositional objective.
//!
//! Given sampled return vectors `r_1 .. r_m` in R^N, the objective trades
//! expected return against return variance:
//!
//! ```text
//! Phi(x) = -(1/m) sum_t <r_t, x>
//!          + (1/m) sum_t ( <r_t, x> - (1/m) sum_s <r_s, x> )^2 .
//! ```
//!
//! The nested structure comes from the mean return inside the variance term.
//! The standard decomposition makes both levels finite sums over the same
//! sample pool (`m` inner and outer components):
//!
//! ```text
//! g_j(x) = ( x, <r_j, x> )                       in R^{N+1},
//! f_i(y) = -<r_i, y~> + ( <r_i, y~> - y_last )^2,   y~ = y_{1..N},
//! ```
//!
//! so `g(x) = (x, <mean return, x>)` and the composition reproduces the
//! objective exactly. In matrix form `Phi(x) = -<rbar, x> + x^T Cov x` with
//! the (biased, 1/m) sample covariance, giving the closed-form minimizer
//! `x* = Cov^{-1} rbar / 2` used for objective-gap curves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StormError};
use crate::problem::{
    check_index, check_inner_dim, check_point_dim, CompositionalProblem, InnerValue, Jacobian,
    Point,
};
use crate::sampling::RandomSource;

/// Portfolio problem over a fixed matrix of sampled returns (rows = samples).
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    /// `m x N` return samples, one row per period.
    returns: DMatrix<f64>,
    /// Sample mean return `rbar`.
    mean_return: DVector<f64>,
    /// Closed-form minimizer, when the sample covariance is invertible.
    minimizer: Option<DVector<f64>>,
    /// Objective value at the minimizer.
    phi_star: Option<f64>,
}

impl Portfolio {
    /// Builds the problem from a returns matrix (`m x N`, `m >= 2`).
    pub fn new(returns: DMatrix<f64>) -> Result<Self> {
        let m = returns.nrows();
        let n = returns.ncols();
        if m < 2 || n == 0 {
            return Err(StormError::InvalidProblem(format!(
                "portfolio needs at least 2 return samples and 1 asset (got {m} x {n})"
            )));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(StormError::InvalidProblem(
                "portfolio returns must be finite".into(),
            ));
        }
        let mean_return = returns.row_mean().transpose();
        // Biased sample covariance (1/m), matching the objective's variance term.
        let centered = {
            let mut c = returns.clone();
            for mut row in c.row_iter_mut() {
                row -= mean_return.transpose();
            }
            c
        };
        let covariance = centered.transpose() * &centered / m as f64;
        let (minimizer, phi_star) = match covariance.cholesky() {
            Some(chol) => {
                let x_star = chol.solve(&mean_return) / 2.0;
                let value = -0.5 * mean_return.dot(&x_star);
                (Some(x_star), Some(value))
            }
            None => (None, None),
        };
        Ok(Self {
            returns,
            mean_return,
            minimizer,
            phi_star,
        })
    }

    /// Generates a seeded Gaussian instance whose population covariance has
    /// log-spaced eigenvalues between `1` and `condition_number` in a random
    /// orthogonal basis; the mean return vector has standard normal entries.
    pub fn generate(
        samples: usize,
        assets: usize,
        condition_number: f64,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        if !(condition_number >= 1.0) || !condition_number.is_finite() {
            return Err(StormError::InvalidArgument(format!(
                "condition number must be at least 1 (got {condition_number})"
            )));
        }
        if assets == 0 || samples < 2 {
            return Err(StormError::InvalidProblem(format!(
                "generation needs at least 2 samples and 1 asset (got {samples} x {assets})"
            )));
        }
        let sqrt_eigs: Vec<f64> = (0..assets)
            .map(|k| {
                if assets == 1 {
                    1.0
                } else {
                    condition_number.powf(k as f64 / (assets as f64 - 1.0)).sqrt()
                }
            })
            .collect();
        let gaussian = DMatrix::from_fn(assets, assets, |_, _| rng.standard_normal());
        let q = gaussian.qr().q();
        // Factor A with A A^T = Q diag(eigs) Q^T.
        let mut factor = q;
        for (k, mut col) in factor.column_iter_mut().enumerate() {
            col.scale_mut(sqrt_eigs[k]);
        }
        let mean = DVector::from_fn(assets, |_, _| rng.standard_normal());
        let mut returns = DMatrix::zeros(samples, assets);
        for t in 0..samples {
            let z = DVector::from_fn(assets, |_, _| rng.standard_normal());
            let r = &mean + &factor * z;
            returns.row_mut(t).copy_from(&r.transpose());
        }
        Self::new(returns)
    }

    /// The sampled returns matrix.
    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    /// Sample mean return.
    pub fn mean_return(&self) -> &DVector<f64> {
        &self.mean_return
    }

    /// Closed-form minimizer `Cov^{-1} rbar / 2`, if the covariance is
    /// invertible.
    pub fn minimizer(&self) -> Option<&DVector<f64>> {
        self.minimizer.as_ref()
    }
}

impl CompositionalProblem for Portfolio {
    fn decision_dim(&self) -> usize {
        self.returns.ncols()
    }

    fn inner_dim(&self) -> usize {
        self.returns.ncols() + 1
    }

    fn inner_count(&self) -> usize {
        self.returns.nrows()
    }

    fn outer_count(&self) -> usize {
        self.returns.nrows()
    }

    fn inner_value(&self, j: usize, x: &Point) -> Result<InnerValue> {
        check_index(j, self.inner_count())?;
        check_point_dim(self, x)?;
        let n = self.decision_dim();
        let mut y = InnerValue::zeros(n + 1);
        y.rows_mut(0, n).copy_from(x);
        y[n] = self.returns.row(j).transpose().dot(x);
        Ok(y)
    }

    fn inner_jacobian(&self, j: usize, x: &Point) -> Result<Jacobian> {
        check_index(j, self.inner_count())?;
        check_point_dim(self, x)?;
        let n = self.decision_dim();
        let mut jac = DMatrix::zeros(n + 1, n);
        for k in 0..n {
            jac[(k, k)] = 1.0;
            jac[(n, k)] = self.returns[(j, k)];
        }
        Ok(jac)
    }

    fn outer_value(&self, i: usize, y: &InnerValue) -> Result<f64> {
        check_index(i, self.outer_count())?;
        check_inner_dim(self, y)?;
        let n = self.decision_dim();
        let ret = self.returns.row(i).transpose().dot(&y.rows(0, n).into_owned());
        let dev = ret - y[n];
        Ok(-ret + dev * dev)
    }

    fn outer_gradient(&self, i: usize, y: &InnerValue) -> Result<InnerValue> {
        check_index(i, self.outer_count())?;
        check_inner_dim(self, y)?;
        let n = self.decision_dim();
        let ret = self.returns.row(i).transpose().dot(&y.rows(0, n).into_owned());
        let dev = ret - y[n];
        let mut grad = InnerValue::zeros(n + 1);
        for k in 0..n {
            grad[k] = (2.0 * dev - 1.0) * self.returns[(i, k)];
        }
        grad[n] = -2.0 * dev;
        Ok(grad)
    }

    fn name(&self) -> &str {
        "portfolio"
    }

    fn phi_star(&self) -> Option<f64> {
        self.phi_star
    }
}
