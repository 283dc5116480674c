//! Parameter planning from problem constants.
//!
//! The convergence analysis of the optimizer expresses every tunable in terms
//! of eight problem constants (smoothness, boundedness, variance, initial gap)
//! and the accuracy target `eps`:
//!
//! - momentum weights scale like `a = alpha * eps`,
//! - per-iteration batch sizes like `B = beta / eps`,
//! - initialization batch sizes like `S = gamma / eps`,
//! - the iteration count like `T = t_coeff / eps^2` with
//!   `t_coeff = (32/3) * L_Phi * Delta`,
//! - and the step scale is `eta = 1 / L_Phi`.
//!
//! [`plan_exact`] fills the ten coefficients with the closed-form choices of
//! the analysis, [`plan_order`] accepts user coefficients (the mode used to
//! mirror published experiment settings), and [`plan_explicit`] wraps directly
//! specified hyper-parameters, reverse-deriving coefficients at the given
//! `eps`. [`condition_check`] evaluates the twelve-term feasibility inequality
//! (LHS <= 1/16) that the stationarity guarantee rests on, term by term.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StormError};
use crate::estimators::{InitBatches, MomentumWeights};
use crate::eval::exact_phi;
use crate::optimizer::{HyperParams, StepBatches};
use crate::problem::CompositionalProblem;
use crate::sampling::RandomSource;

/// The feasibility threshold: the condition LHS must not exceed `1/16`.
pub const CONDITION_BOUND: f64 = 1.0 / 16.0;

/// Problem constants feeding the planner.
///
/// `delta` is the initial objective gap `Phi(x_0) - Phi*`; `l_f`, `l_g` are
/// gradient/Jacobian Lipschitz constants of the outer/inner components; `m_f`,
/// `m_g` bound outer gradient norms and inner Jacobian operator norms; `h1`,
/// `h2`, `h3` bound the component variances of outer gradients, inner
/// Jacobians (Frobenius), and inner values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub delta: f64,
    pub l_f: f64,
    pub l_g: f64,
    pub m_f: f64,
    pub m_g: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    /// Overrides the derived composite smoothness when set (any valid upper
    /// bound for the composition is admissible, and a tighter one than
    /// `M_f*L_g + M_g^2*L_f` may be known analytically).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_phi_given: Option<f64>,
    /// True when the values came from sampling rather than analysis.
    #[serde(default)]
    pub heuristic: bool,
}

impl ProblemConstants {
    /// Composite smoothness `L_Phi = M_f*L_g + M_g^2*L_f`, unless overridden.
    pub fn l_phi(&self) -> f64 {
        self.l_phi_given
            .unwrap_or(self.m_f * self.l_g + self.m_g * self.m_g * self.l_f)
    }

    /// Validates that every constant is finite and nonnegative, and that the
    /// ones the plan formulas divide by are strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta", self.delta),
            ("l_f", self.l_f),
            ("l_g", self.l_g),
            ("m_f", self.m_f),
            ("m_g", self.m_g),
            ("h1", self.h1),
            ("h2", self.h2),
            ("h3", self.h3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(StormError::InfeasibleConstants(format!(
                    "constant {name} = {v} must be finite and nonnegative"
                )));
            }
        }
        if let Some(lp) = self.l_phi_given {
            if !lp.is_finite() || lp <= 0.0 {
                return Err(StormError::InfeasibleConstants(format!(
                    "given L_Phi = {lp} must be finite and positive"
                )));
            }
        }
        Ok(())
    }

    fn require_positive(&self, names: &[(&str, f64)]) -> Result<()> {
        for (name, v) in names {
            if *v <= 0.0 {
                return Err(StormError::InfeasibleConstants(format!(
                    "constant {name} must be strictly positive for this plan (got {v})"
                )));
            }
        }
        Ok(())
    }
}

/// The numerator constant of the gradient-estimator error recursion.
///
/// `K0 = [4*M_f^2*(1/(24M_f^2) + 3L_g^2/L_Phi^2 + 1)
///        + 4*L_f^2*(2M_g+sqrt(H2))*(1/(24M_g^2 L_f^2) + 3M_g^2/L_Phi^2 + 1)] / B_f`.
///
/// The division by `b_f` is performed last, so `k0(c, 2b) == k0(c, b) / 2`
/// holds bitwise.
pub fn k0(c: &ProblemConstants, b_f: f64) -> Result<f64> {
    c.validate()?;
    c.require_positive(&[("m_f", c.m_f), ("m_g", c.m_g), ("l_f", c.l_f)])?;
    let l_phi = c.l_phi();
    if l_phi <= 0.0 {
        return Err(StormError::InfeasibleConstants(
            "L_Phi must be strictly positive in the K0 formula".into(),
        ));
    }
    if !(b_f >= 1.0) {
        return Err(StormError::InvalidArgument(format!(
            "K0 needs a batch size B_f >= 1 (got {b_f})"
        )));
    }
    let lp2 = l_phi * l_phi;
    let term_f = 4.0 * c.m_f * c.m_f
        * (1.0 / (24.0 * c.m_f * c.m_f) + 3.0 * c.l_g * c.l_g / lp2 + 1.0);
    let term_g = 4.0 * c.l_f * c.l_f
        * (2.0 * c.m_g + c.h2.sqrt())
        * (1.0 / (24.0 * c.m_g * c.m_g * c.l_f * c.l_f) + 3.0 * c.m_g * c.m_g / lp2 + 1.0);
    Ok((term_f + term_g) / b_f)
}

/// The ten eps-free plan coefficients: `a = alpha*eps`, `B = ceil(beta/eps)`,
/// `S = ceil(gamma/eps)`, `T = ceil(t_coeff/eps^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanCoefficients {
    pub alpha_g: f64,
    pub alpha_jac: f64,
    pub alpha_f: f64,
    pub beta_g: f64,
    pub beta_jac: f64,
    pub beta_f: f64,
    pub gamma_g: f64,
    pub gamma_jac: f64,
    pub gamma_f: f64,
    pub t_coeff: f64,
}

impl Default for PlanCoefficients {
    fn default() -> Self {
        Self {
            alpha_g: 1.0,
            alpha_jac: 1.0,
            alpha_f: 1.0,
            beta_g: 1.0,
            beta_jac: 1.0,
            beta_f: 1.0,
            gamma_g: 1.0,
            gamma_jac: 1.0,
            gamma_f: 1.0,
            t_coeff: 1.0,
        }
    }
}

impl PlanCoefficients {
    /// Validates that every coefficient is finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_g", self.alpha_g),
            ("alpha_jac", self.alpha_jac),
            ("alpha_f", self.alpha_f),
            ("beta_g", self.beta_g),
            ("beta_jac", self.beta_jac),
            ("beta_f", self.beta_f),
            ("gamma_g", self.gamma_g),
            ("gamma_jac", self.gamma_jac),
            ("gamma_f", self.gamma_f),
            ("t_coeff", self.t_coeff),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(StormError::InvalidArgument(format!(
                    "plan coefficient {name} = {v} must be finite and positive"
                )));
            }
        }
        Ok(())
    }
}

/// How a plan was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    /// Closed-form coefficients derived from problem constants.
    Exact,
    /// User-chosen coefficients with the prescribed eps-scaling.
    Order,
    /// Directly specified hyper-parameters, coefficients reverse-derived.
    Explicit,
}

/// One term of the feasibility condition, labeled by the error source it
/// budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionTerm {
    pub label: String,
    pub value: f64,
}

/// Result of evaluating the twelve-term feasibility inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Sum of all terms.
    pub lhs: f64,
    /// The threshold `1/16`.
    pub bound: f64,
    /// Whether `lhs <= bound`.
    pub passes: bool,
    /// The individual summands, in display order.
    pub terms: Vec<ConditionTerm>,
}

/// A resolved parameter plan: coefficients, the accuracy they were resolved
/// at, the concrete hyper-parameters, and (for exact plans) the `K0` constant
/// and the feasibility report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPlan {
    pub mode: PlanMode,
    pub eps: f64,
    pub coeffs: PlanCoefficients,
    pub hyper: HyperParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<ConditionReport>,
}

impl ParameterPlan {
    /// Total oracle calls of the resolved plan.
    pub fn ifo_total(&self) -> u64 {
        self.hyper.ifo_total()
    }

    /// The pre-ceiling symbolic oracle-call total
    /// `(gamma_g+gamma_jac+gamma_f)/eps + t_coeff*(beta_g+beta_jac+beta_f)/eps^3`.
    /// The resolved [`Self::ifo_total`] exceeds this only by ceiling effects.
    pub fn symbolic_ifo(&self) -> f64 {
        let gammas = self.coeffs.gamma_g + self.coeffs.gamma_jac + self.coeffs.gamma_f;
        let betas = self.coeffs.beta_g + self.coeffs.beta_jac + self.coeffs.beta_f;
        gammas / self.eps + self.coeffs.t_coeff * betas / (self.eps * self.eps * self.eps)
    }
}

/// Total oracle calls: `S_g + S_jac + S_f + T * (B_g + B_jac + B_f)`.
pub fn ifo_total(init: InitBatches, steps: StepBatches, t_iters: u64) -> u64 {
    init.total() + t_iters * steps.total()
}

fn check_eps(eps: f64) -> Result<()> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(StormError::InfeasibleEpsilon {
            eps,
            message: "accuracy eps must be finite and positive".into(),
        });
    }
    Ok(())
}

/// Rounds `coeff / eps` up to an integer batch size, at least 1.
fn ceil_count(coeff: f64, eps: f64, name: &str) -> Result<usize> {
    let v = (coeff / eps).ceil();
    if !v.is_finite() || v > 1e15 {
        return Err(StormError::InfeasibleConstants(format!(
            "resolved batch size {name} = {v} is not a representable count"
        )));
    }
    Ok((v as usize).max(1))
}

fn ceil_iters(t_coeff: f64, eps: f64) -> Result<u64> {
    let v = (t_coeff / (eps * eps)).ceil();
    if !v.is_finite() || v < 0.0 || v > 1e15 {
        return Err(StormError::InfeasibleConstants(format!(
            "resolved iteration count T = {v} is not a representable count"
        )));
    }
    Ok(v as u64)
}

fn resolve(
    mode: PlanMode,
    coeffs: PlanCoefficients,
    eps: f64,
    eta: f64,
    clamp_momentum: bool,
) -> Result<ParameterPlan> {
    coeffs.validate()?;
    check_eps(eps)?;
    let resolve_a = |alpha: f64, name: &str| -> Result<f64> {
        let a = alpha * eps;
        if a >= 1.0 {
            if clamp_momentum {
                return Ok(1.0);
            }
            return Err(StormError::InfeasibleEpsilon {
                eps,
                message: format!(
                    "momentum {name} = {a:.6} leaves (0,1); largest feasible eps is {:.6}",
                    1.0 / alpha
                ),
            });
        }
        Ok(a)
    };
    let weights = MomentumWeights {
        a_g: resolve_a(coeffs.alpha_g, "a_g")?,
        a_jac: resolve_a(coeffs.alpha_jac, "a_jac")?,
        a_f: resolve_a(coeffs.alpha_f, "a_f")?,
    };
    let hyper = HyperParams {
        eta,
        eps,
        weights,
        init: InitBatches {
            s_g: ceil_count(coeffs.gamma_g, eps, "S_g")?,
            s_jac: ceil_count(coeffs.gamma_jac, eps, "S_jac")?,
            s_f: ceil_count(coeffs.gamma_f, eps, "S_f")?,
        },
        steps: StepBatches {
            b_g: ceil_count(coeffs.beta_g, eps, "B_g")?,
            b_jac: ceil_count(coeffs.beta_jac, eps, "B_jac")?,
            b_f: ceil_count(coeffs.beta_f, eps, "B_f")?,
        },
        t_iters: ceil_iters(coeffs.t_coeff, eps)?,
    };
    hyper.validate()?;
    Ok(ParameterPlan {
        mode,
        eps,
        coeffs,
        hyper,
        k0: None,
        feasibility: None,
    })
}

/// Builds the closed-form plan for accuracy `eps` from problem constants.
///
/// `eps` must lie in the validity window
/// `0 < eps < min(1, 72*L_Phi*M_g*L_f^2*sqrt(H3), 72*L_Phi*M_f^2*sqrt(H2)/L_g)`,
/// and each resolved momentum `alpha * eps` must stay below 1. The `K0`
/// constant is evaluated at `B_f = 1`, i.e. as the batch-free numerator `C`
/// of `K0 = C / B_f`: this keeps all ten coefficients free of `eps`, which is
/// what makes the resolved plan scale-consistently (`a` proportional to
/// `eps`, batches to `1/eps`). Solving instead for a self-consistent pair
/// `(K0, B_f)` at one fixed `eps` would tie the coefficients to that `eps`,
/// break the scaling, and overshoot the feasibility condition by an order of
/// magnitude.
pub fn plan_exact(c: &ProblemConstants, eps: f64) -> Result<ParameterPlan> {
    c.validate()?;
    check_eps(eps)?;
    c.require_positive(&[
        ("delta", c.delta),
        ("l_f", c.l_f),
        ("l_g", c.l_g),
        ("m_f", c.m_f),
        ("m_g", c.m_g),
        ("h1", c.h1),
        ("h2", c.h2),
        ("h3", c.h3),
    ])?;
    let l_phi = c.l_phi();
    if l_phi <= 0.0 {
        return Err(StormError::InfeasibleConstants(
            "L_Phi must be strictly positive to plan".into(),
        ));
    }

    let window = 1.0_f64
        .min(72.0 * l_phi * c.m_g * c.l_f * c.l_f * c.h3.sqrt())
        .min(72.0 * l_phi * c.m_f * c.m_f * c.h2.sqrt() / c.l_g);
    if eps >= window {
        return Err(StormError::InfeasibleEpsilon {
            eps,
            message: format!("eps must lie strictly below the validity window {window:.6}"),
        });
    }

    let k0_value = k0(c, 1.0)?;
    let u = 2.0 * c.m_g + c.h2.sqrt();
    let t0 = 32.0 / 3.0 * l_phi * c.delta;
    let beta_f = 432.0 * (2.0 * u * c.h1 * k0_value).sqrt();
    let coeffs = PlanCoefficients {
        alpha_g: c.m_g / (l_phi * c.h3.sqrt()),
        alpha_jac: c.l_g / (l_phi * c.h2.sqrt()),
        alpha_f: (k0_value / (2.0 * u * c.h1)).sqrt(),
        beta_g: 864.0 * c.m_g.powi(3) * c.l_f * c.l_f * c.h3.sqrt() / l_phi,
        beta_jac: 864.0 * c.m_f * c.m_f * c.l_g * c.h2.sqrt() / l_phi,
        beta_f,
        gamma_g: 81.0 * c.m_g * c.l_f * c.l_f * c.h3.powf(1.5) / c.delta,
        gamma_jac: 81.0 * c.m_f * c.m_f * c.h2.powf(1.5) / (c.delta * c.l_g),
        gamma_f: c.m_g * c.m_g * c.h1 * beta_f / (t0 * k0_value),
        t_coeff: t0,
    };
    let mut plan = resolve(PlanMode::Exact, coeffs, eps, 1.0 / l_phi, false)?;
    plan.k0 = Some(k0_value);
    plan.feasibility = Some(condition_check(c, &coeffs, eps)?);
    Ok(plan)
}

/// Builds a plan from user-chosen coefficients at accuracy `eps` with step
/// scale `eta`. Momenta that would resolve at or above 1 are clamped to 1
/// (plain minibatch estimation), since order-level tuning often puts `a`
/// right at the boundary.
pub fn plan_order(eps: f64, coeffs: PlanCoefficients, eta: f64) -> Result<ParameterPlan> {
    resolve(PlanMode::Order, coeffs, eps, eta, true)
}

/// Wraps directly specified hyper-parameters as a plan, reverse-deriving the
/// coefficients at `hyper.eps` (`alpha = a/eps`, `beta = B*eps`,
/// `gamma = S*eps`, `t_coeff = T*eps^2`).
pub fn plan_explicit(hyper: &HyperParams) -> Result<ParameterPlan> {
    hyper.validate()?;
    check_eps(hyper.eps)?;
    let eps = hyper.eps;
    let coeffs = PlanCoefficients {
        alpha_g: hyper.weights.a_g / eps,
        alpha_jac: hyper.weights.a_jac / eps,
        alpha_f: hyper.weights.a_f / eps,
        beta_g: hyper.steps.b_g as f64 * eps,
        beta_jac: hyper.steps.b_jac as f64 * eps,
        beta_f: hyper.steps.b_f as f64 * eps,
        gamma_g: hyper.init.s_g as f64 * eps,
        gamma_jac: hyper.init.s_jac as f64 * eps,
        gamma_f: hyper.init.s_f as f64 * eps,
        t_coeff: hyper.t_iters as f64 * eps * eps,
    };
    Ok(ParameterPlan {
        mode: PlanMode::Explicit,
        eps,
        coeffs,
        hyper: hyper.clone(),
        k0: None,
        feasibility: None,
    })
}

/// Evaluates the twelve-term feasibility inequality for the given constants
/// and plan coefficients at accuracy `eps`.
///
/// With `u = 2*M_g + L_g/(L_Phi*alpha_jac)` and `T0 = (32/3)*L_Phi*Delta`,
/// the left-hand side is
///
/// ```text
///   (1/L_Phi^2) * [ 36 M_f^2 L_g^2/(aF bF) * (4/(aJ bJ) + 2 eps/bJ + 1)
///                 + 36 L_f^2 M_g^2 u/(aF bF) * (4/(aG bG) + 2 eps/bG + 1)
///                 +  6 M_f^2 L_g^2/(aJ bJ)
///                 +  6 M_g^4 L_f^2/(aG bG) ]
/// + 6 M_f^2 H2/(T0 aJ cJ) * (24/(aF bF) + 1)
/// + 6 L_f^2 H3/(T0 aG cG) * (24 u/(aF bF) + M_g^2)
/// + 3 M_g^2 H1/(T0 aF cF)
/// + 72 M_f^2 aJ H2/(aF bF bJ) * (2 + aJ eps)
/// + 72 L_f^2 aG H3 u/(aF bF bG) * (2 + aG eps)
/// + 6 aF u^2 H1/bF
/// + 6 M_f^2 aJ H2/bJ
/// + 6 M_g^2 L_f^2 aG H3/bG
/// ```
///
/// (`aG/aJ/aF` = alpha, `bG/bJ/bF` = beta, `cG/cJ/cF` = gamma coefficients
/// for the inner-value, Jacobian, and composed-gradient estimators), and the
/// report compares it against `1/16`.
pub fn condition_check(
    c: &ProblemConstants,
    coeffs: &PlanCoefficients,
    eps: f64,
) -> Result<ConditionReport> {
    c.validate()?;
    coeffs.validate()?;
    check_eps(eps)?;
    let l_phi = c.l_phi();
    c.require_positive(&[
        ("delta", c.delta),
        ("l_g", c.l_g),
        ("L_Phi", l_phi),
        ("m_g", c.m_g),
    ])?;

    let lp2 = l_phi * l_phi;
    let u = 2.0 * c.m_g + c.l_g / (l_phi * coeffs.alpha_jac);
    let t0 = 32.0 / 3.0 * l_phi * c.delta;
    let af_bf = coeffs.alpha_f * coeffs.beta_f;
    let aj_bj = coeffs.alpha_jac * coeffs.beta_jac;
    let ag_bg = coeffs.alpha_g * coeffs.beta_g;
    let mf2 = c.m_f * c.m_f;
    let mg2 = c.m_g * c.m_g;
    let lf2 = c.l_f * c.l_f;
    let lg2 = c.l_g * c.l_g;

    let terms = vec![
        ConditionTerm {
            label: "jac_drift_into_f".into(),
            value: 36.0 * mf2 * lg2 / (lp2 * af_bf) * (4.0 / aj_bj + 2.0 * eps / coeffs.beta_jac + 1.0),
        },
        ConditionTerm {
            label: "g_drift_into_f".into(),
            value: 36.0 * lf2 * mg2 * u / (lp2 * af_bf) * (4.0 / ag_bg + 2.0 * eps / coeffs.beta_g + 1.0),
        },
        ConditionTerm {
            label: "jac_drift".into(),
            value: 6.0 * mf2 * lg2 / (lp2 * aj_bj),
        },
        ConditionTerm {
            label: "g_drift".into(),
            value: 6.0 * mg2 * mg2 * lf2 / (lp2 * ag_bg),
        },
        ConditionTerm {
            label: "jac_init".into(),
            value: 6.0 * mf2 * c.h2 / (t0 * coeffs.alpha_jac * coeffs.gamma_jac)
                * (24.0 / af_bf + 1.0),
        },
        ConditionTerm {
            label: "g_init".into(),
            value: 6.0 * lf2 * c.h3 / (t0 * coeffs.alpha_g * coeffs.gamma_g)
                * (24.0 * u / af_bf + mg2),
        },
        ConditionTerm {
            label: "f_init".into(),
            value: 3.0 * mg2 * c.h1 / (t0 * coeffs.alpha_f * coeffs.gamma_f),
        },
        ConditionTerm {
            label: "jac_noise_into_f".into(),
            value: 72.0 * mf2 * coeffs.alpha_jac * c.h2 / (af_bf * coeffs.beta_jac)
                * (2.0 + coeffs.alpha_jac * eps),
        },
        ConditionTerm {
            label: "g_noise_into_f".into(),
            value: 72.0 * lf2 * coeffs.alpha_g * c.h3 * u / (af_bf * coeffs.beta_g)
                * (2.0 + coeffs.alpha_g * eps),
        },
        ConditionTerm {
            label: "f_noise".into(),
            value: 6.0 * coeffs.alpha_f * u * u * c.h1 / coeffs.beta_f,
        },
        ConditionTerm {
            label: "jac_noise".into(),
            value: 6.0 * mf2 * coeffs.alpha_jac * c.h2 / coeffs.beta_jac,
        },
        ConditionTerm {
            label: "g_noise".into(),
            value: 6.0 * mg2 * lf2 * coeffs.alpha_g * c.h3 / coeffs.beta_g,
        },
    ];

    let lhs: f64 = terms.iter().map(|t| t.value).sum();
    if !lhs.is_finite() {
        return Err(StormError::InfeasibleConstants(
            "feasibility condition evaluated to a non-finite value".into(),
        ));
    }
    Ok(ConditionReport {
        lhs,
        bound: CONDITION_BOUND,
        passes: lhs <= CONDITION_BOUND,
        terms,
    })
}

/// Estimation-error budget of the stationarity guarantee: the mean squared
/// gradient-estimate error is budgeted at `A * eps^2`, which yields
/// `E |grad Phi(x^)| <= 2 L_Phi Delta/(T eps) + (1/2 + A + sqrt(A)) eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub a: f64,
}

impl Default for ErrorBudget {
    /// The value the feasibility condition is calibrated to: `A = 1/16`.
    fn default() -> Self {
        Self { a: CONDITION_BOUND }
    }
}

impl ErrorBudget {
    /// The eps-coefficient `1/2 + A + sqrt(A)` of the stationarity bound
    /// (equals `0.8125` at the default `A = 1/16`).
    pub fn stationarity_factor(&self) -> f64 {
        0.5 + self.a + self.a.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || self.a <= 0.0 {
            return Err(StormError::InvalidArgument(format!(
                "error budget A = {} must be positive",
                self.a
            )));
        }
        Ok(())
    }
}

/// Empirically estimates problem constants by sampling `sample_budget` points
/// uniformly from the ball of radius `domain_radius` around the problem's
/// initial point.
///
/// Component pools of up to 128 are enumerated; larger pools are subsampled
/// (64 components per point). Bounds (`M`'s) are max sampled norms, Lipschitz
/// constants are max difference quotients over consecutive point pairs,
/// variance bounds are max sampled component variances, and `delta` is the
/// gap from `Phi` at the initial point down to the known optimum when the
/// problem exposes one, else down to the best sampled value. The result is
/// flagged `heuristic`: estimates from finitely many samples can only
/// under-estimate suprema.
pub fn estimate_constants<P: CompositionalProblem + ?Sized>(
    problem: &P,
    domain_radius: f64,
    sample_budget: usize,
    rng: &mut RandomSource,
) -> Result<ProblemConstants> {
    if !(domain_radius > 0.0) {
        return Err(StormError::InvalidArgument(format!(
            "domain radius must be positive (got {domain_radius})"
        )));
    }
    let n_points = sample_budget.max(2);
    let d = problem.decision_dim();
    let m = problem.inner_count();
    let n = problem.outer_count();
    let x0 = problem.initial_point();

    let inner_ids = component_sample(m, rng);
    let outer_ids = component_sample(n, rng);

    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        // Uniform in the ball: isotropic direction, radius ~ r^(1/d).
        let mut dir = nalgebra::DVector::from_fn(d, |_, _| rng.standard_normal());
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
        }
        let r = domain_radius * rng.uniform().powf(1.0 / d as f64);
        points.push(&x0 + dir * r);
    }

    let mut m_g: f64 = 0.0;
    let mut l_g: f64 = 0.0;
    let mut h2: f64 = 0.0;
    let mut h3: f64 = 0.0;
    let mut prev_jacs: Option<Vec<crate::problem::Jacobian>> = None;
    let mut prev_x: Option<crate::problem::Point> = None;
    let mut images = Vec::with_capacity(n_points);
    for x in &points {
        let jacs: Vec<_> = inner_ids
            .iter()
            .map(|&j| problem.inner_jacobian(j, x))
            .collect::<Result<_>>()?;
        let vals: Vec<_> = inner_ids
            .iter()
            .map(|&j| problem.inner_value(j, x))
            .collect::<Result<_>>()?;

        for jac in &jacs {
            m_g = m_g.max(operator_norm(jac));
        }
        h2 = h2.max(matrix_variance(&jacs));
        h3 = h3.max(vector_variance(&vals));

        if let (Some(pjacs), Some(px)) = (&prev_jacs, &prev_x) {
            let dist = (x - px).norm();
            if dist > 1e-12 {
                for (jac, pjac) in jacs.iter().zip(pjacs) {
                    l_g = l_g.max((jac - pjac).norm() / dist);
                }
            }
        }

        let mut mean = vals[0].clone();
        for v in &vals[1..] {
            mean += v;
        }
        mean /= vals.len() as f64;
        images.push(mean);
        prev_jacs = Some(jacs);
        prev_x = Some(x.clone());
    }

    let mut m_f: f64 = 0.0;
    let mut l_f: f64 = 0.0;
    let mut h1: f64 = 0.0;
    let mut prev_grads: Option<Vec<crate::problem::InnerValue>> = None;
    let mut prev_y: Option<crate::problem::InnerValue> = None;
    for y in &images {
        let grads: Vec<_> = outer_ids
            .iter()
            .map(|&i| problem.outer_gradient(i, y))
            .collect::<Result<_>>()?;
        for grad in &grads {
            m_f = m_f.max(grad.norm());
        }
        h1 = h1.max(vector_variance(&grads));
        if let (Some(pgrads), Some(py)) = (&prev_grads, &prev_y) {
            let dist = (y - py).norm();
            if dist > 1e-12 {
                for (grad, pgrad) in grads.iter().zip(pgrads) {
                    l_f = l_f.max((grad - pgrad).norm() / dist);
                }
            }
        }
        prev_grads = Some(grads);
        prev_y = Some(y.clone());
    }

    let phi0 = exact_phi(problem, &x0)?;
    let floor = match problem.phi_star() {
        Some(star) => star,
        None => {
            let mut best = phi0;
            for x in &points {
                best = best.min(exact_phi(problem, x)?);
            }
            best
        }
    };

    Ok(ProblemConstants {
        delta: (phi0 - floor).max(0.0),
        l_f,
        l_g,
        m_f,
        m_g,
        h1,
        h2,
        h3,
        l_phi_given: None,
        heuristic: true,
    })
}

fn component_sample(pool: usize, rng: &mut RandomSource) -> Vec<usize> {
    if pool <= 128 {
        (0..pool).collect()
    } else {
        (0..64).map(|_| rng.draw_index(pool)).collect()
    }
}

fn operator_norm(m: &crate::problem::Jacobian) -> f64 {
    m.clone().svd(false, false).singular_values[0]
}

fn vector_variance(vs: &[crate::problem::InnerValue]) -> f64 {
    let k = vs.len();
    if k < 2 {
        return 0.0;
    }
    let mut mean = vs[0].clone();
    for v in &vs[1..] {
        mean += v;
    }
    mean /= k as f64;
    vs.iter().map(|v| (v - &mean).norm_squared()).sum::<f64>() / k as f64
}

fn matrix_variance(ms: &[crate::problem::Jacobian]) -> f64 {
    let k = ms.len();
    if k < 2 {
        return 0.0;
    }
    let mut mean = ms[0].clone();
    for m in &ms[1..] {
        mean += m;
    }
    mean /= k as f64;
    ms.iter().map(|m| (m - &mean).norm_squared()).sum::<f64>() / k as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// All eight constants 1; composite smoothness supplied as 1 as well.
    fn unit_given() -> ProblemConstants {
        ProblemConstants {
            delta: 1.0,
            l_f: 1.0,
            l_g: 1.0,
            m_f: 1.0,
            m_g: 1.0,
            h1: 1.0,
            h2: 1.0,
            h3: 1.0,
            l_phi_given: Some(1.0),
            heuristic: false,
        }
    }

    /// Same but with the composite smoothness derived (= 2).
    fn unit_derived() -> ProblemConstants {
        ProblemConstants {
            l_phi_given: None,
            ..unit_given()
        }
    }

    #[test]
    fn l_phi_formula_and_override() {
        let c = ProblemConstants {
            delta: 1.0,
            l_f: 4.0,
            l_g: 3.0,
            m_f: 2.0,
            m_g: 1.0,
            h1: 1.0,
            h2: 1.0,
            h3: 1.0,
            l_phi_given: None,
            heuristic: false,
        };
        assert_eq!(c.l_phi(), 10.0);
        let degenerate = ProblemConstants {
            m_f: 0.0,
            l_f: 0.0,
            ..c.clone()
        };
        assert_eq!(degenerate.l_phi(), 0.0);
        let overridden = ProblemConstants {
            l_phi_given: Some(7.5),
            ..c
        };
        assert_eq!(overridden.l_phi(), 7.5);
    }

    #[test]
    fn k0_unit_constants_hand_value() {
        // (4)(1/24 + 3 + 1) + (4)(3)(1/24 + 3 + 1) = 16 * 97/24 = 194/3.
        assert_relative_eq!(
            k0(&unit_given(), 1.0).unwrap(),
            194.0 / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn k0_batch_homogeneity_is_exact() {
        let c = ProblemConstants {
            delta: 0.7,
            l_f: 2.1,
            l_g: 0.3,
            m_f: 1.4,
            m_g: 0.8,
            h1: 0.5,
            h2: 0.25,
            h3: 0.9,
            l_phi_given: None,
            heuristic: false,
        };
        let base = k0(&c, 1.0).unwrap();
        assert_eq!(k0(&c, 2.0).unwrap(), base / 2.0);
        assert_eq!(k0(&c, 8.0).unwrap(), base / 8.0);
    }

    #[test]
    fn k0_zero_h2_reduces_to_two_m_g() {
        let c = ProblemConstants {
            h2: 0.0,
            ..unit_given()
        };
        // Second addend becomes 4 * (2 M_g) * (1/24 + 3 + 1).
        let expected = 4.0 * (97.0 / 24.0) + 4.0 * 2.0 * (97.0 / 24.0);
        assert_relative_eq!(k0(&c, 1.0).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn k0_rejects_degenerate_inputs() {
        assert!(k0(&unit_given(), 0.5).is_err());
        let zero_mf = ProblemConstants {
            m_f: 0.0,
            ..unit_given()
        };
        assert!(k0(&zero_mf, 1.0).is_err());
    }

    #[test]
    fn plan_exact_unit_constants_frozen_values() {
        let plan = plan_exact(&unit_given(), 0.1).unwrap();
        let c = &plan.coeffs;
        assert_relative_eq!(plan.k0.unwrap(), 64.6666666667, max_relative = 1e-9);
        assert_relative_eq!(c.alpha_g, 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.alpha_jac, 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.alpha_f, 3.2829526006, max_relative = 1e-9);
        assert_relative_eq!(c.beta_g, 864.0, max_relative = 1e-12);
        assert_relative_eq!(c.beta_jac, 864.0, max_relative = 1e-12);
        assert_relative_eq!(c.beta_f, 8509.41314075, max_relative = 1e-9);
        assert_relative_eq!(c.gamma_g, 81.0, max_relative = 1e-12);
        assert_relative_eq!(c.gamma_jac, 81.0, max_relative = 1e-12);
        assert_relative_eq!(c.gamma_f, 12.3364559064, max_relative = 1e-9);

        let h = &plan.hyper;
        assert_eq!(h.eta, 1.0);
        assert_eq!(h.t_iters, 1067);
        assert_relative_eq!(h.weights.a_g, 0.1, max_relative = 1e-12);
        assert_relative_eq!(h.weights.a_jac, 0.1, max_relative = 1e-12);
        assert_relative_eq!(h.weights.a_f, 0.32829526006, max_relative = 1e-9);
        assert_eq!(h.steps.b_g, 8640);
        assert_eq!(h.steps.b_jac, 8640);
        assert_eq!(h.steps.b_f, 85095);
        assert_eq!(h.init.s_g, 810);
        assert_eq!(h.init.s_jac, 810);
        assert_eq!(h.init.s_f, 124);
    }

    #[test]
    fn plan_exact_derived_smoothness_frozen_values() {
        let plan = plan_exact(&unit_derived(), 0.1).unwrap();
        let c = &plan.coeffs;
        assert_relative_eq!(plan.k0.unwrap(), 86.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(c.alpha_g, 0.5, max_relative = 1e-12);
        assert_relative_eq!(c.alpha_jac, 0.5, max_relative = 1e-12);
        assert_relative_eq!(c.alpha_f, 2.18581284143, max_relative = 1e-9);
        assert_relative_eq!(c.beta_g, 432.0, max_relative = 1e-12);
        assert_relative_eq!(c.beta_f, 5665.626885, max_relative = 1e-9);
        assert_relative_eq!(c.gamma_g, 81.0, max_relative = 1e-12);
        assert_relative_eq!(c.gamma_f, 9.26428814771, max_relative = 1e-9);
        assert_eq!(plan.hyper.eta, 0.5);
        assert_eq!(plan.hyper.t_iters, 2134);
        assert_eq!(plan.hyper.steps.b_g, 4320);
        assert_eq!(plan.hyper.steps.b_f, 56657);
        assert_eq!(plan.hyper.init.s_f, 93);
        assert_relative_eq!(
            plan.hyper.weights.a_f,
            0.218581284143,
            max_relative = 1e-9
        );
    }

    #[test]
    fn condition_check_unit_plan_frozen_lhs() {
        let c = unit_given();
        let plan = plan_exact(&c, 0.1).unwrap();
        let report = plan.feasibility.as_ref().unwrap();
        assert_eq!(report.terms.len(), 12);
        assert_relative_eq!(report.lhs, 0.0746730622375, max_relative = 1e-9);
        // The f-noise term carries u^2 = 9 against an equipartition budget of
        // 1/144 per slot, so the unit plan lands above the bound.
        assert!(!report.passes);
        assert_relative_eq!(report.terms[9].value, 3.0 / 144.0, max_relative = 1e-9);
        let direct = condition_check(&c, &plan.coeffs, 0.1).unwrap();
        assert_eq!(direct.lhs, report.lhs);
    }

    #[test]
    fn condition_check_tiny_beta_f_fails_loudly() {
        let c = unit_derived();
        let mut coeffs = plan_exact(&c, 0.1).unwrap().coeffs;
        coeffs.beta_f = 1.0;
        let report = condition_check(&c, &coeffs, 0.1).unwrap();
        assert!(!report.passes);
        // First group alone already exceeds the bound.
        assert!(report.terms[0].value > CONDITION_BOUND);
        assert_relative_eq!(report.lhs, 135.48, max_relative = 1e-2);
    }

    #[test]
    fn condition_check_vanishes_as_batches_grow() {
        let c = unit_given();
        let mut coeffs = plan_exact(&c, 0.1).unwrap().coeffs;
        for b in [
            &mut coeffs.beta_g,
            &mut coeffs.beta_jac,
            &mut coeffs.beta_f,
            &mut coeffs.gamma_g,
            &mut coeffs.gamma_jac,
            &mut coeffs.gamma_f,
        ] {
            *b *= 1e9;
        }
        let report = condition_check(&c, &coeffs, 0.1).unwrap();
        assert!(report.passes);
        assert!(report.lhs < 1e-6, "lhs = {}", report.lhs);
    }

    #[test]
    fn plan_exact_scale_consistency() {
        let c = unit_given();
        let p1 = plan_exact(&c, 0.1).unwrap();
        let p2 = plan_exact(&c, 0.05).unwrap();
        // Coefficients are eps-free, hence identical.
        assert_eq!(p1.coeffs, p2.coeffs);
        // Momenta halve exactly, batch sizes double up to one ceiling unit,
        // the iteration count quadruples up to three.
        assert_relative_eq!(
            p2.hyper.weights.a_f,
            p1.hyper.weights.a_f / 2.0,
            max_relative = 1e-15
        );
        for (b2, b1) in [
            (p2.hyper.steps.b_g, p1.hyper.steps.b_g),
            (p2.hyper.steps.b_jac, p1.hyper.steps.b_jac),
            (p2.hyper.steps.b_f, p1.hyper.steps.b_f),
            (p2.hyper.init.s_g, p1.hyper.init.s_g),
            (p2.hyper.init.s_f, p1.hyper.init.s_f),
        ] {
            assert!((b2 as i64 - 2 * b1 as i64).abs() <= 1, "{b2} vs 2*{b1}");
        }
        assert!((p2.hyper.t_iters as i64 - 4 * p1.hyper.t_iters as i64).abs() <= 3);
    }

    #[test]
    fn symbolic_ifo_matches_resolved_up_to_ceilings() {
        let plan = plan_exact(&unit_given(), 0.1).unwrap();
        let resolved = plan.ifo_total();
        let symbolic = plan.symbolic_ifo();
        assert_eq!(resolved, 109_235_869);
        assert_relative_eq!(symbolic, 109_200_816.865912, max_relative = 1e-9);
        // Ceilings only ever add oracle calls.
        assert!(symbolic <= resolved as f64);
        assert!((resolved as f64) <= symbolic * 1.001);
    }

    #[test]
    fn plan_exact_refuses_out_of_window_and_oversized_momentum() {
        let c = unit_given();
        // Window for unit constants is min(1, 72, 72) = 1.
        match plan_exact(&c, 1.5) {
            Err(StormError::InfeasibleEpsilon { .. }) => {}
            other => panic!("expected window refusal, got {other:?}"),
        }
        // eps = 0.5 is inside the window but resolves a_f = 1.64 >= 1.
        match plan_exact(&c, 0.5) {
            Err(StormError::InfeasibleEpsilon { message, .. }) => {
                assert!(message.contains("a_f"), "{message}");
            }
            other => panic!("expected momentum refusal, got {other:?}"),
        }
        assert!(plan_exact(&c, 0.0).is_err());
        assert!(plan_exact(&c, -0.1).is_err());
    }

    #[test]
    fn plan_order_resolves_published_experiment_settings() {
        // eps = 0.1 with alpha = 0.1, beta = gamma = 10 resolves to
        // a = 0.01, B = S = 100: the portfolio experiment settings.
        let coeffs = PlanCoefficients {
            alpha_g: 0.1,
            alpha_jac: 0.1,
            alpha_f: 0.1,
            beta_g: 10.0,
            beta_jac: 10.0,
            beta_f: 10.0,
            gamma_g: 10.0,
            gamma_jac: 10.0,
            gamma_f: 10.0,
            t_coeff: 1.0,
        };
        let plan = plan_order(0.1, coeffs, 0.1).unwrap();
        assert_eq!(plan.mode, PlanMode::Order);
        assert_relative_eq!(plan.hyper.weights.a_g, 0.01, max_relative = 1e-12);
        assert_eq!(plan.hyper.steps.b_g, 100);
        assert_eq!(plan.hyper.init.s_f, 100);
        assert_eq!(plan.hyper.t_iters, 100);
        assert_eq!(plan.hyper.eta, 0.1);
        // Halving eps doubles batches and quadruples iterations.
        let half = plan_order(0.05, coeffs, 0.1).unwrap();
        assert_eq!(half.hyper.steps.b_g, 200);
        assert_eq!(half.hyper.t_iters, 400);
        // Oversized momentum clamps to 1 in order mode.
        let clamped = plan_order(
            0.5,
            PlanCoefficients {
                alpha_g: 5.0,
                ..coeffs
            },
            0.1,
        )
        .unwrap();
        assert_eq!(clamped.hyper.weights.a_g, 1.0);
    }

    #[test]
    fn plan_explicit_round_trips_through_order_mode() {
        let hyper = HyperParams {
            eta: 0.1,
            eps: 0.1,
            weights: MomentumWeights::uniform(0.01),
            init: InitBatches::uniform(100),
            steps: StepBatches::uniform(100),
            t_iters: 2000,
        };
        let plan = plan_explicit(&hyper).unwrap();
        assert_eq!(plan.mode, PlanMode::Explicit);
        assert_relative_eq!(plan.coeffs.alpha_g, 0.1, max_relative = 1e-12);
        assert_relative_eq!(plan.coeffs.beta_g, 10.0, max_relative = 1e-12);
        assert_relative_eq!(plan.coeffs.gamma_f, 10.0, max_relative = 1e-12);
        assert_relative_eq!(plan.coeffs.t_coeff, 20.0, max_relative = 1e-12);
        let round = plan_order(0.1, plan.coeffs, 0.1).unwrap();
        assert_eq!(round.hyper.weights, hyper.weights);
        assert_eq!(round.hyper.steps, hyper.steps);
        assert_eq!(round.hyper.init, hyper.init);
        assert_eq!(round.hyper.t_iters, hyper.t_iters);
    }

    #[test]
    fn ifo_total_formula_and_linearity() {
        assert_eq!(
            ifo_total(InitBatches::uniform(100), StepBatches::uniform(100), 10),
            3300
        );
        assert_eq!(
            ifo_total(InitBatches::uniform(100), StepBatches::uniform(100), 0),
            300
        );
        let init = InitBatches {
            s_g: 3,
            s_jac: 5,
            s_f: 7,
        };
        let steps = StepBatches {
            b_g: 2,
            b_jac: 4,
            b_f: 6,
        };
        let slope = steps.total();
        for t in [0u64, 1, 13, 999] {
            assert_eq!(ifo_total(init, steps, t + 1) - ifo_total(init, steps, t), slope);
        }
    }

    #[test]
    fn error_budget_default_factor() {
        let budget = ErrorBudget::default();
        assert_relative_eq!(budget.stationarity_factor(), 0.8125, max_relative = 1e-15);
        assert!(ErrorBudget { a: 0.0 }.validate().is_err());
    }

    #[test]
    fn estimated_constants_recover_analytic_values_within_ten_percent() {
        use crate::problems::QuadToy;
        let problem = QuadToy::new();
        let truth = problem.constants();
        let mut rng = crate::sampling::RandomSource::from_seed(0);
        let est =
            estimate_constants(&problem, problem.domain_radius(), 500, &mut rng).unwrap();
        assert!(est.heuristic);
        for (name, estimated, analytic) in [
            ("delta", est.delta, truth.delta),
            ("l_f", est.l_f, truth.l_f),
            ("l_g", est.l_g, truth.l_g),
            ("m_f", est.m_f, truth.m_f),
            ("m_g", est.m_g, truth.m_g),
            ("h1", est.h1, truth.h1),
            ("h2", est.h2, truth.h2),
            ("h3", est.h3, truth.h3),
        ] {
            let rel = (estimated - analytic).abs() / analytic;
            assert!(
                rel <= 0.1,
                "{name}: estimated {estimated} vs analytic {analytic} (rel {rel})"
            );
        }
        // Sampling can only under-estimate suprema, never exceed them.
        assert!(est.m_g <= truth.m_g + 1e-12);
        assert!(est.m_f <= truth.m_f + 1e-12);

        assert!(estimate_constants(&problem, 0.0, 10, &mut rng).is_err());
    }
}

