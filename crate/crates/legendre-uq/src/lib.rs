//! Moments of the Legendre differential equation with jointly random index
//! and initial conditions.
//!
//! The initial value problem
//!
//! ```text
//! (1 - t^2) X''(t) - 2 t X'(t) + A (A + 1) X(t) = 0,
//! X(0) = X0,  X'(0) = X1,
//! ```
//!
//! becomes an uncertainty-propagation problem once `(A, X0, X1)` is drawn
//! from a joint distribution: what are the mean and variance of `X(t)`?
//! This crate answers that *analytically*. The solution's power series has
//! coefficients polynomial in `A`, so the truncated series' expectation
//! reduces to a finite set of weighted coefficient moments — computed once
//! per model, exactly for discrete laws and by self-checking Gauss-Legendre
//! quadrature for continuous ones. No trajectory sampling is involved in
//! the production path; Monte Carlo and direct ODE integration exist in
//! [`mc_estimate`]/[`mc_ode_estimate`] purely as independent watchdogs.
//!
//! ```
//! use legendre_uq::{JointInputModel, MomentEngine, TruncationOrder};
//!
//! // Three multinomial counts play (A, X0, X1).
//! let model = JointInputModel::multinomial(10, [0.2, 0.3, 0.5])?;
//!
//! // Build the coefficient-moment cache once, then query any (t, order).
//! let order = TruncationOrder::new(40);
//! let engine = MomentEngine::new(&model, order)?;
//! let row = engine.row(0.6, order)?;
//!
//! assert!((row.mean - 2.45623).abs() < 1e-4);
//! assert!(row.variance > 0.0);
//! # Ok::<(), legendre_uq::Error>(())
//! ```
//!
//! The pieces, bottom up:
//!
//! * series kernel — [`coefficients`], [`eval_truncated`], [`residual`],
//!   with [`product_p1`]/[`product_p2`] as closed-form cross-checks;
//! * input models — [`JointInputModel`] (Dirichlet, multinomial counts,
//!   truncated trivariate normal, discrete atoms, raw densities), each
//!   knowing its index bound, integration strategy, and sampler;
//! * moment pipeline — [`MomentEngine`], [`moment_table`], and the
//!   [`stabilization_check`] diagnostics that report which truncation
//!   order has converged where;
//! * oracles — [`mc_estimate`] (seeded, thread-count-independent Monte
//!   Carlo) and [`ode_solve`]/[`mc_ode_estimate`] (adaptive Runge-Kutta),
//!   sharing none of the pipeline's machinery.
//!
//! Two policies hold everywhere. Results are **deterministic**: fixed-block
//! parallel reductions and ChaCha12 sampling make every number bitwise
//! reproducible across runs and thread counts. And failure is **loud**:
//! unconverged quadrature, unbounded index support, out-of-domain
//! evaluation, and inconsistent caches are all [`Error`] values, never
//! silently degraded output.
//!
//! The [`guide`] walks through all of this chapter by chapter.

mod dist;
mod error;
mod moments;
mod oracles;
mod quad;
mod series;
mod special;

pub use oracles::{
    mc_estimate, mc_ode_estimate, ode_solve, McCell, McReport, DEFAULT_MC_EVAL_ORDER, ODE_GUARD,
};

pub use moments::{
    expectation, moment_table, stabilization_check, variance, MomentEngine, MomentRow,
    MomentTable, StabilizationReport, StabilizationStep,
};

pub use dist::{
    Atom, JointInputModel, NormalizationCheck, QuadratureSpec, SampleBatch, Support,
    ValidationReport, CUBE_QUAD_DEFAULT, GENERATOR_ID, LINE_QUAD_DEFAULT,
};
pub use error::{Error, Result};
pub use series::{
    coefficients, eval_truncated, product_p1, product_p2, residual, CoefficientSequence,
    Realization, TruncationOrder,
};

/// A guided tour of the crate, one concept per chapter.
///
/// Each module below is a chapter of the book under `book/` in the source
/// repository, included verbatim — so every example in the book compiles
/// and runs as a doc-test of this crate (`cargo test --doc`). The command
/// line has its own chapter, hosted by the `legendre-uq-cli` crate for the
/// same reason.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}

    #[doc = include_str!("../../../book/src/series.md")]
    pub mod series {}

    #[doc = include_str!("../../../book/src/models.md")]
    pub mod models {}

    #[doc = include_str!("../../../book/src/moments.md")]
    pub mod moments {}

    #[doc = include_str!("../../../book/src/oracles.md")]
    pub mod oracles {}
}
