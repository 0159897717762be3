//! Small set of special functions used by the input models.
//!
//! These delegate to `libm` so results do not depend on the platform's libc.

/// Natural log of the gamma function for positive arguments.
pub(crate) fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    libm::lgamma(x)
}

/// Standard normal cumulative distribution function.
///
/// Computed through `erfc` rather than `erf` so the deep lower tail keeps
/// relative accuracy (`0.5 * erfc(-z / sqrt(2))` does not cancel for z << 0).
pub(crate) fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub(crate) fn norm_pdf(z: f64) -> f64 {
    const INV_SQRT_TAU: f64 = 0.398_942_280_401_432_7; // 1 / sqrt(2 pi)
    INV_SQRT_TAU * (-0.5 * z * z).exp()
}
