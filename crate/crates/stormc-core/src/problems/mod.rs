//! Ready-made compositional problems: three benchmark instances and a
//! closed-form calibration fixture.
//!
//! - [`QuadToy`]: tiny quadratic composition whose regularity and variance
//!   constants are exact closed forms — the fixture for planner and bound
//!   verification.
//! - [`Portfolio`]: mean-variance portfolio selection over sampled return
//!   vectors, with a closed-form optimum for gap curves.
//! - [`ValueEval`]: policy value evaluation on a random MDP as a nested
//!   least-squares residual.
//! - [`Sne`]: stochastic neighbor embedding of a point cloud (non-convex,
//!   with a genuinely partial domain: log of a sampled similarity).

mod portfolio;
mod quad_toy;
mod sne;
mod value_eval;

pub use portfolio::Portfolio;
pub use quad_toy::QuadToy;
pub use sne::Sne;
pub use value_eval::ValueEval;
