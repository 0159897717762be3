use thiserror::Error;

/// Errors reported by the series kernel, input models, moment engine and
/// validation oracles.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    /// Series evaluation requested outside the open interval of convergence.
    #[error("t = {t} is outside the interval of convergence (-1, 1)")]
    OutsideDomain { t: f64 },

    /// A constructor or operation was handed parameters it cannot accept.
    #[error("invalid {what}: {why}")]
    InvalidInput { what: &'static str, why: String },

    /// The direct coefficient product left f64 range. The product form is a
    /// cross-check oracle; the recurrence path does not overflow this way.
    #[error("coefficient product overflowed f64 at a = {a}, m = {m}")]
    ProductRange { a: f64, m: usize },

    /// The model's A-support has no finite upper bound, so the series has no
    /// uniform convergence guarantee and moment computations refuse to run.
    #[error(
        "the A-support is unbounded, so the power-series solution has no \
         L-infinity guarantee; enable the unbounded override \
         (`with_unbounded_override(true)`, CLI `--override-unbounded`) to \
         proceed at your own risk"
    )]
    UnboundedSupport,

    /// Doubling the quadrature nodes moved the result by more than the
    /// declared tolerance; both estimates are reported.
    #[error(
        "quadrature did not converge: base {base:.17e} vs refined \
         {refined:.17e} exceeds tolerance {tol:.1e}"
    )]
    QuadratureNotConverged { base: f64, refined: f64, tol: f64 },

    /// The model has no sampling route (e.g. a bare density with no
    /// registered sampler).
    #[error("sampling is not available for this {kind} model: {why}")]
    SamplingUnavailable {
        kind: &'static str,
        why: &'static str,
    },

    /// Mixed moments are only defined up to total order two.
    #[error("mixed-moment order p0 + p1 = {got} exceeds the supported maximum 2")]
    MomentOrder { got: u32 },

    /// The ODE oracle refuses endpoints too close to the singular points ±1.
    #[error("ODE endpoint t = {t} is outside the guarded range |t| <= {guard}")]
    OdeGuard { t: f64, guard: f64 },

    /// Adaptive step control shrank the step below representable resolution.
    #[error("ODE step size underflowed near t = {reached} while integrating to {target}")]
    OdeStepUnderflow { reached: f64, target: f64 },

    /// The integrator ran out of its step budget before reaching the endpoint.
    #[error("ODE step budget of {max_steps} exhausted at t = {reached} (endpoint {target})")]
    OdeStepBudget {
        reached: f64,
        target: f64,
        max_steps: usize,
    },

    /// A truncation order larger than the engine's cached maximum was requested.
    #[error("truncation order {requested} exceeds the engine's maximum {max}")]
    OrderTooLarge { requested: usize, max: usize },

    /// `E[X^2] - E[X]^2` came out negative beyond rounding tolerance, which
    /// means the moment cache is inconsistent. Mildly negative values within
    /// tolerance are clamped to zero and flagged instead.
    #[error(
        "computed variance {variance} is negative beyond rounding tolerance \
         (second moment {second_moment})"
    )]
    NegativeVariance { variance: f64, second_moment: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
