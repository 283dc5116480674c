//! Policy value evaluation on a Markov chain as a nested least-squares
//! residual.
//!
//! For a fixed policy the value function satisfies the Bellman equation
//! `V(s) = E[ r(s, s') + gamma * V(s') | s ]`. Value evaluation minimizes the
//! squared Bellman residual, which is compositional because the backup is an
//! expectation inside a square:
//!
//! ```text
//! g_j(V) = ( V, B_j V ),    (B_j V)_i = r(i, s'_{ij}) + gamma * V(s'_{ij}),
//! f_i(w) = n * ( w_i - w_{n+i} )^2 ,
//! ```
//!
//! where `s'_{ij}` is the `j`-th recorded next-state sample for state `i`.
//! The sample tables are drawn once at construction so the objective is a
//! genuine finite sum over `m` inner components; its exact inner mean is the
//! backup under the *empirical* transition frequencies `P^` of those tables,
//! and the minimizer solving `(I - gamma P^) V = r^` zeroes both the
//! objective and its gradient exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StormError};
use crate::problem::{
    check_index, check_inner_dim, check_point_dim, CompositionalProblem, InnerValue, Jacobian,
    Point,
};
use crate::sampling::RandomSource;

/// Tolerance on row sums of a stochastic matrix.
const ROW_SUM_TOL: f64 = 1e-12;

/// Default discount factor for generated chains.
const DEFAULT_GAMMA: f64 = 0.95;

/// Value-evaluation problem over recorded next-state sample tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEval {
    /// Generating transition matrix (`n x n`, row-stochastic).
    p: DMatrix<f64>,
    /// Per-transition rewards `r(i, s')` (`n x n`).
    rewards: DMatrix<f64>,
    /// Discount factor in `[0, 1)`.
    gamma_disc: f64,
    /// `tables[j][i]` = next state recorded for state `i` in table `j`.
    tables: Vec<Vec<usize>>,
    /// Empirical transition frequencies of the tables.
    p_hat: DMatrix<f64>,
    /// Empirical expected immediate reward per state.
    r_hat: DVector<f64>,
}

impl ValueEval {
    /// Builds the problem from a transition matrix, rewards, discount and
    /// `tables` recorded one-sample backups drawn from `P`'s rows.
    pub fn new(
        p: DMatrix<f64>,
        rewards: DMatrix<f64>,
        gamma_disc: f64,
        tables: usize,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(StormError::InvalidProblem(format!(
                "transition matrix must be square and non-empty (got {} x {})",
                p.nrows(),
                p.ncols()
            )));
        }
        if rewards.nrows() != n || rewards.ncols() != n {
            return Err(StormError::InvalidProblem(format!(
                "rewards must be {n} x {n} (got {} x {})",
                rewards.nrows(),
                rewards.ncols()
            )));
        }
        if rewards.iter().any(|v| !v.is_finite()) {
            return Err(StormError::InvalidProblem("rewards must be finite".into()));
        }
        for (i, row) in p.row_iter().enumerate() {
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(StormError::InvalidProblem(format!(
                    "transition row {i} has negative or non-finite entries"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(StormError::InvalidProblem(format!(
                    "transition row {i} sums to {sum}, expected 1"
                )));
            }
        }
        if !(0.0..1.0).contains(&gamma_disc) {
            return Err(StormError::InvalidProblem(format!(
                "discount factor must lie in [0, 1) (got {gamma_disc})"
            )));
        }
        if tables == 0 {
            return Err(StormError::InvalidProblem(
                "at least one next-state table is required".into(),
            ));
        }

        let mut recorded = Vec::with_capacity(tables);
        for _ in 0..tables {
            let mut table = Vec::with_capacity(n);
            for i in 0..n {
                table.push(sample_row(&p, i, rng));
            }
            recorded.push(table);
        }

        let mut p_hat = DMatrix::zeros(n, n);
        let mut r_hat = DVector::zeros(n);
        for table in &recorded {
            for (i, &s) in table.iter().enumerate() {
                p_hat[(i, s)] += 1.0 / tables as f64;
                r_hat[i] += rewards[(i, s)] / tables as f64;
            }
        }

        Ok(Self {
            p,
            rewards,
            gamma_disc,
            tables: recorded,
            p_hat,
            r_hat,
        })
    }

    /// Generates a random chain: per-action Dirichlet(1) transition rows
    /// averaged under a uniform policy, rewards i.i.d. uniform on `[0, 1]`,
    /// discount `0.95`.
    pub fn generate(
        n_states: usize,
        n_actions: usize,
        tables: usize,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(StormError::InvalidProblem(
                "generation needs at least one state and one action".into(),
            ));
        }
        let mut p = DMatrix::zeros(n_states, n_states);
        for _ in 0..n_actions {
            for i in 0..n_states {
                // Dirichlet(1, ..., 1) row: normalized i.i.d. exponentials.
                let draws: Vec<f64> = (0..n_states)
                    .map(|_| -(1.0 - rng.uniform()).ln())
                    .collect();
                let total: f64 = draws.iter().sum();
                for (s, d) in draws.iter().enumerate() {
                    p[(i, s)] += d / (total * n_actions as f64);
                }
            }
        }
        // Renormalize away accumulated rounding so rows sum to 1 exactly.
        for mut row in p.row_iter_mut() {
            let sum: f64 = row.iter().sum();
            row /= sum;
        }
        let rewards = DMatrix::from_fn(n_states, n_states, |_, _| rng.uniform());
        Self::new(p, rewards, DEFAULT_GAMMA, tables, rng)
    }

    /// Number of states `n`.
    pub fn states(&self) -> usize {
        self.p.nrows()
    }

    /// Empirical transition frequencies of the recorded tables.
    pub fn empirical_transition(&self) -> &DMatrix<f64> {
        &self.p_hat
    }

    /// The value function of the recorded tables: solves
    /// `(I - gamma P^) V = r^`. This is the exact minimizer of the objective
    /// (residual zero).
    pub fn exact_value_function(&self) -> Result<Point> {
        let n = self.states();
        let system = DMatrix::identity(n, n) - &self.p_hat * self.gamma_disc;
        system
            .lu()
            .solve(&self.r_hat)
            .ok_or_else(|| StormError::InvalidProblem("Bellman system is singular".into()))
    }
}

/// Inverse-CDF draw from row `i` of a stochastic matrix.
fn sample_row(p: &DMatrix<f64>, i: usize, rng: &mut RandomSource) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    let n = p.ncols();
    for s in 0..n {
        acc += p[(i, s)];
        if u < acc {
            return s;
        }
    }
    n - 1
}

impl CompositionalProblem for ValueEval {
    fn decision_dim(&self) -> usize {
        self.states()
    }

    fn inner_dim(&self) -> usize {
        2 * self.states()
    }

    fn inner_count(&self) -> usize {
        self.tables.len()
    }

    fn outer_count(&self) -> usize {
        self.states()
    }

    fn inner_value(&self, j: usize, v: &Point) -> Result<InnerValue> {
        check_index(j, self.inner_count())?;
        check_point_dim(self, v)?;
        let n = self.states();
        let mut y = InnerValue::zeros(2 * n);
        y.rows_mut(0, n).copy_from(v);
        for (i, &s) in self.tables[j].iter().enumerate() {
            y[n + i] = self.rewards[(i, s)] + self.gamma_disc * v[s];
        }
        Ok(y)
    }

    fn inner_jacobian(&self, j: usize, v: &Point) -> Result<Jacobian> {
        check_index(j, self.inner_count())?;
        check_point_dim(self, v)?;
        let n = self.states();
        let mut jac = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            jac[(i, i)] = 1.0;
            jac[(n + i, self.tables[j][i])] += self.gamma_disc;
        }
        Ok(jac)
    }

    fn outer_value(&self, i: usize, w: &InnerValue) -> Result<f64> {
        check_index(i, self.outer_count())?;
        check_inner_dim(self, w)?;
        let n = self.states();
        let res = w[i] - w[n + i];
        Ok(n as f64 * res * res)
    }

    fn outer_gradient(&self, i: usize, w: &InnerValue) -> Result<InnerValue> {
        check_index(i, self.outer_count())?;
        check_inner_dim(self, w)?;
        let n = self.states();
        let res = w[i] - w[n + i];
        let mut grad = InnerValue::zeros(2 * n);
        grad[i] = 2.0 * n as f64 * res;
        grad[n + i] = -2.0 * n as f64 * res;
        Ok(grad)
    }

    fn name(&self) -> &str {
        "value-eval"
    }

    fn phi_star(&self) -> Option<f64> {
        Some(0.0)
    }
}
