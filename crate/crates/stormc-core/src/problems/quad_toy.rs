//! Calibration fixture: a quadratic composition whose objective, optimum and
//! every regularity/variance constant are exact closed forms.
//!
//! With `x in R^4` the inner components map into R^5:
//!
//! ```text
//! g_j(x) = [ (s + d_j) * x ;  (mu/2) * |x|^2 ],    d_j = +/- 0.1 (balanced),
//! ```
//!
//! and the outer components read only the first four coordinates:
//!
//! ```text
//! f_i(y) = (1 + p_i)/2 * |y~|^2 - <c, y~>,         p_i = +/- 2 (balanced),
//! ```
//!
//! where `y~ = (y_1..y_4)`. The signs cancel in the means, so
//!
//! ```text
//! Phi(x) = (s^2/2) |x|^2 - s <c, x>,
//! ```
//!
//! a strongly convex quadratic with minimizer `x* = c/s` — yet each component
//! oracle is genuinely noisy (some outer components are even concave), and the
//! curvature coordinate `(mu/2)|x|^2` makes the inner Jacobians x-dependent so
//! that no constant degenerates to zero.
//!
//! On the ball `|x| <= R` every constant is an exact supremum:
//!
//! | constant | value | attained at |
//! |----------|-------|-------------|
//! | `M_g`    | `sqrt((s+0.1)^2 + mu^2 R^2)` | boundary, any direction |
//! | `L_g`    | `mu` | everywhere |
//! | `L_f`    | `1 + 2` | everywhere |
//! | `M_f`    | `3 s R + |c|` | `y~ = -sR c/|c|`, convex component |
//! | `H1`     | `4 s^2 R^2` | boundary image |
//! | `H2`     | `0.1^2 * 4` | everywhere |
//! | `H3`     | `0.1^2 * R^2` | boundary |
//!
//! The minimizer `x* = (0.5, 0.5, 0.5, 0.5)` lies strictly inside `R = 1.4`,
//! and normalized steps from the origin stay inside the ball, so the suprema
//! are honest bounds along optimization trajectories.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::planner::ProblemConstants;
use crate::problem::{
    check_index, check_inner_dim, check_point_dim, CompositionalProblem, InnerValue, Jacobian,
    Point,
};

const DIM: usize = 4;
const INNER_DIM: usize = DIM + 1;
const INNER_COUNT: usize = 8;
const OUTER_COUNT: usize = 6;
const S: f64 = 0.3;
const D_SCALE: f64 = 0.1;
const MU: f64 = 0.15;
const P_SCALE: f64 = 2.0;
const C_BAR: f64 = 0.15;
const RADIUS: f64 = 1.4;

/// The fixed calibration instance described in the module docs.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadToy {
    c_bar: DVector<f64>,
}

impl QuadToy {
    pub fn new() -> Self {
        Self {
            c_bar: DVector::from_element(DIM, C_BAR),
        }
    }

    /// Sign-alternating inner scale offset `d_j`.
    fn d(j: usize) -> f64 {
        if j % 2 == 0 {
            D_SCALE
        } else {
            -D_SCALE
        }
    }

    /// Sign-alternating outer curvature offset `p_i`.
    fn p(i: usize) -> f64 {
        if i % 2 == 0 {
            P_SCALE
        } else {
            -P_SCALE
        }
    }

    /// Radius of the ball on which the analytic constants are suprema.
    pub fn domain_radius(&self) -> f64 {
        RADIUS
    }

    /// The unique minimizer `x* = c/s`.
    pub fn minimizer(&self) -> Point {
        &self.c_bar / S
    }

    /// Closed-form objective value (equals the oracle composition exactly).
    pub fn analytic_phi(&self, x: &Point) -> f64 {
        0.5 * S * S * x.norm_squared() - S * self.c_bar.dot(x)
    }

    /// Exact regularity and variance constants on the ball `|x| <= R`.
    pub fn constants(&self) -> ProblemConstants {
        let m_f = (1.0 + P_SCALE) * S * RADIUS + self.c_bar.norm();
        let m_g = ((S + D_SCALE).powi(2) + MU * MU * RADIUS * RADIUS).sqrt();
        ProblemConstants {
            delta: -self.phi_star().unwrap(),
            l_f: 1.0 + P_SCALE,
            l_g: MU,
            m_f,
            m_g,
            h1: P_SCALE * P_SCALE * S * S * RADIUS * RADIUS,
            h2: D_SCALE * D_SCALE * DIM as f64,
            h3: D_SCALE * D_SCALE * RADIUS * RADIUS,
            l_phi_given: None,
            heuristic: false,
        }
    }
}

impl Default for QuadToy {
    fn default() -> Self {
        Self::new()
    }
}

impl CompositionalProblem for QuadToy {
    fn decision_dim(&self) -> usize {
        DIM
    }

    fn inner_dim(&self) -> usize {
        INNER_DIM
    }

    fn inner_count(&self) -> usize {
        INNER_COUNT
    }

    fn outer_count(&self) -> usize {
        OUTER_COUNT
    }

    fn inner_value(&self, j: usize, x: &Point) -> Result<InnerValue> {
        check_index(j, INNER_COUNT)?;
        check_point_dim(self, x)?;
        let scale = S + Self::d(j);
        let mut y = InnerValue::zeros(INNER_DIM);
        for k in 0..DIM {
            y[k] = scale * x[k];
        }
        y[DIM] = 0.5 * MU * x.norm_squared();
        Ok(y)
    }

    fn inner_jacobian(&self, j: usize, x: &Point) -> Result<Jacobian> {
        check_index(j, INNER_COUNT)?;
        check_point_dim(self, x)?;
        let scale = S + Self::d(j);
        let mut jac = DMatrix::zeros(INNER_DIM, DIM);
        for k in 0..DIM {
            jac[(k, k)] = scale;
            jac[(DIM, k)] = MU * x[k];
        }
        Ok(jac)
    }

    fn outer_value(&self, i: usize, y: &InnerValue) -> Result<f64> {
        check_index(i, OUTER_COUNT)?;
        check_inner_dim(self, y)?;
        let head = y.rows(0, DIM);
        let q = 1.0 + Self::p(i);
        Ok(0.5 * q * head.norm_squared() - self.c_bar.dot(&head))
    }

    fn outer_gradient(&self, i: usize, y: &InnerValue) -> Result<InnerValue> {
        check_index(i, OUTER_COUNT)?;
        check_inner_dim(self, y)?;
        let q = 1.0 + Self::p(i);
        let mut grad = InnerValue::zeros(INNER_DIM);
        for k in 0..DIM {
            grad[k] = q * y[k] - self.c_bar[k];
        }
        Ok(grad)
    }

    fn name(&self) -> &str {
        "quad-toy"
    }

    fn phi_star(&self) -> Option<f64> {
        Some(-0.5 * self.c_bar.norm_squared())
    }
}
