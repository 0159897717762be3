//! Truncated power-series solutions of the Legendre equation for a single
//! realization of the random inputs.
//!
//! For a realization `(a, x0, x1)` the initial value problem is
//!
//! ```text
//! (1 - t^2) x''(t) - 2 t x'(t) + a (a + 1) x(t) = 0,
//! x(0) = x0,  x'(0) = x1,
//! ```
//!
//! whose solution on (-1, 1) splits into an even and an odd analytic part,
//!
//! ```text
//! x(t) = x0 * sum_m c[2m]   t^(2m)  +  x1 * sum_m c[2m+1] t^(2m+1),
//! ```
//!
//! with every coefficient fixed by the two-term recurrence
//!
//! ```text
//! c[n+2] = c[n] * (n (n + 1) - a (a + 1)) / ((n + 1) (n + 2)),
//! c[0] = c[1] = 1.
//! ```
//!
//! When `a` is a nonnegative integer, the series of matching parity
//! terminates and is a rescaled Legendre polynomial; for every other `a` both
//! series are genuinely infinite and converge on the open interval only.
//! Everything downstream (moment caches, Monte Carlo cross-checks) is built
//! on truncating these series at a fixed polynomial degree `M`.
//!
//! The recurrence is the production path. The equivalent closed products
//!
//! ```text
//! c[2m]   = (-1)^m * P1(m) / (2m)!,    P1(m) = prod_{k=1..m} (a - 2k + 2)(a + 2k - 1)
//! c[2m+1] = (-1)^m * P2(m) / (2m+1)!,  P2(m) = prod_{k=1..m} (a - 2k + 1)(a + 2k)
//! ```
//!
//! are kept as an independent cross-check: they reach f64 overflow quickly
//! (the factorial and the product are huge before their ratio becomes small),
//! so [`product_p1`]/[`product_p2`] report a range error instead of returning
//! infinities.

use crate::error::{Error, Result};

/// Polynomial degree `M` at which the series is truncated.
///
/// A truncation of degree `M` keeps every power `t^0 ... t^M`, i.e.
/// `M/2 + 1` even coefficients and `(M + 1)/2` odd ones. `M = 0` keeps just
/// the constant term; the odd series is then empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TruncationOrder(usize);

impl TruncationOrder {
    pub const fn new(order: usize) -> Self {
        Self(order)
    }

    pub const fn get(self) -> usize {
        self.0
    }

    /// Number of even-index coefficients c[0], c[2], ..., up to degree M.
    pub(crate) const fn even_len(self) -> usize {
        self.0 / 2 + 1
    }

    /// Number of odd-index coefficients c[1], c[3], ..., up to degree M.
    pub(crate) const fn odd_len(self) -> usize {
        (self.0 + 1) / 2
    }
}

impl From<usize> for TruncationOrder {
    fn from(order: usize) -> Self {
        Self(order)
    }
}

impl std::fmt::Display for TruncationOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "M{}", self.0)
    }
}

/// One draw of the random inputs: the Legendre index `a >= 0` and the two
/// initial conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realization {
    a: f64,
    x0: f64,
    x1: f64,
}

impl Realization {
    /// The index must be finite and nonnegative, the initial conditions finite.
    pub fn new(a: f64, x0: f64, x1: f64) -> Result<Self> {
        if !a.is_finite() || a < 0.0 {
            return Err(Error::InvalidInput {
                what: "realization",
                why: format!("index a must be finite and >= 0, got {a}"),
            });
        }
        if !x0.is_finite() || !x1.is_finite() {
            return Err(Error::InvalidInput {
                what: "realization",
                why: format!("initial conditions must be finite, got x0 = {x0}, x1 = {x1}"),
            });
        }
        Ok(Self { a, x0, x1 })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
}

/// Series coefficients of both parities for one index value, truncated at a
/// fixed degree. Built once per realization (or per quadrature node) and then
/// evaluated at as many `t` as needed.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSequence {
    a: f64,
    even: Vec<f64>,
    odd: Vec<f64>,
}

impl CoefficientSequence {
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Coefficients of t^0, t^2, t^4, ...
    pub fn even(&self) -> &[f64] {
        &self.even
    }

    /// Coefficients of t^1, t^3, t^5, ...
    pub fn odd(&self) -> &[f64] {
        &self.odd
    }

    /// Degree of the truncated polynomial these coefficients describe.
    pub fn order(&self) -> TruncationOrder {
        if self.odd.len() == self.even.len() {
            TruncationOrder(2 * self.odd.len() - 1)
        } else {
            TruncationOrder(2 * (self.even.len() - 1))
        }
    }

    /// Evaluate `x0 * even(t) + x1 * t * odd(t^2)` by Horner in t^2.
    ///
    /// The caller guarantees |t| < 1 and that (x0, x1) belong to the same
    /// realization as the index these coefficients were built for.
    pub(crate) fn evaluate(&self, x0: f64, x1: f64, t: f64) -> f64 {
        eval_filled(&self.even, &self.odd, x0, x1, t)
    }
}

/// Evaluation off caller-owned coefficient slices (the Monte Carlo hot path
/// reuses one pair of scratch buffers across all realizations).
pub(crate) fn eval_filled(even: &[f64], odd: &[f64], x0: f64, x1: f64, t: f64) -> f64 {
    debug_assert!(t.abs() < 1.0);
    let s = t * t;
    x0 * horner(even, s) + x1 * t * horner(odd, s)
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Both coefficient families for index `a`, truncated at degree `order`.
pub fn coefficients(a: f64, order: TruncationOrder) -> CoefficientSequence {
    debug_assert!(a.is_finite() && a >= 0.0);
    let mut even = vec![0.0; order.even_len()];
    let mut odd = vec![0.0; order.odd_len()];
    fill_even(a, &mut even);
    fill_odd(a, &mut odd);
    CoefficientSequence { a, even, odd }
}

/// Fill `out[m] = c[2m]` by the recurrence. `out` may be empty.
pub(crate) fn fill_even(a: f64, out: &mut [f64]) {
    let Some(first) = out.first_mut() else {
        return;
    };
    *first = 1.0;
    let aa = a * (a + 1.0);
    let mut c = 1.0;
    for (m, slot) in out.iter_mut().enumerate().skip(1) {
        let n = (2 * m - 2) as f64;
        c *= (n * (n + 1.0) - aa) / ((n + 1.0) * (n + 2.0));
        *slot = c;
    }
}

/// Fill `out[m] = c[2m+1]` by the recurrence. `out` may be empty.
pub(crate) fn fill_odd(a: f64, out: &mut [f64]) {
    let Some(first) = out.first_mut() else {
        return;
    };
    *first = 1.0;
    let aa = a * (a + 1.0);
    let mut c = 1.0;
    for (m, slot) in out.iter_mut().enumerate().skip(1) {
        let n = (2 * m - 1) as f64;
        c *= (n * (n + 1.0) - aa) / ((n + 1.0) * (n + 2.0));
        *slot = c;
    }
}

/// Direct product `P1(m) = prod_{k=1..m} (a - 2k + 2)(a + 2k - 1)`, the
/// numerator of the closed form for the even coefficients.
pub fn product_p1(a: f64, m: usize) -> Result<f64> {
    checked_product(a, m, |a, k| (a - 2.0 * k + 2.0) * (a + 2.0 * k - 1.0))
}

/// Direct product `P2(m) = prod_{k=1..m} (a - 2k + 1)(a + 2k)`, the numerator
/// of the closed form for the odd coefficients.
pub fn product_p2(a: f64, m: usize) -> Result<f64> {
    checked_product(a, m, |a, k| (a - 2.0 * k + 1.0) * (a + 2.0 * k))
}

fn checked_product(a: f64, m: usize, term: impl Fn(f64, f64) -> f64) -> Result<f64> {
    if !a.is_finite() || a < 0.0 {
        return Err(Error::InvalidInput {
            what: "product index",
            why: format!("a must be finite and >= 0, got {a}"),
        });
    }
    let mut prod = 1.0;
    for k in 1..=m {
        prod *= term(a, k as f64);
        if !prod.is_finite() {
            return Err(Error::ProductRange { a, m: k });
        }
    }
    Ok(prod)
}

/// Value of the degree-`order` truncated solution at `t`.
///
/// Fails outside the open interval of convergence (-1, 1). Builds the
/// coefficients on each call; to evaluate one realization on many grid
/// points, hold a [`CoefficientSequence`] via [`coefficients`] instead.
pub fn eval_truncated(r: &Realization, t: f64, order: TruncationOrder) -> Result<f64> {
    check_domain(t)?;
    Ok(coefficients(r.a, order).evaluate(r.x0, r.x1, t))
}

/// Residual of the truncated solution in the differential equation,
///
/// ```text
/// (1 - t^2) p''(t) - 2 t p'(t) + a (a + 1) p(t),
/// ```
///
/// where `p` is the degree-`order` truncation. The recurrence makes interior
/// terms cancel exactly, so for `order >= 2` the residual at t = 0 is zero
/// and elsewhere only the two highest powers survive; it shrinks as the
/// truncation grows and vanishes identically once the matching-parity series
/// has terminated. (For `order < 2` the truncation has no curvature term and
/// the residual at 0 is just `a (a + 1) x0`.)
pub fn residual(r: &Realization, t: f64, order: TruncationOrder) -> Result<f64> {
    check_domain(t)?;
    let seq = coefficients(r.a, order);
    // Combined polynomial p of degree `order` with both parities weighted in.
    let mut p = vec![0.0; order.get() + 1];
    for (m, &c) in seq.even.iter().enumerate() {
        p[2 * m] = r.x0 * c;
    }
    for (m, &c) in seq.odd.iter().enumerate() {
        p[2 * m + 1] = r.x1 * c;
    }
    // One descending pass evaluates p, p' and p'' together.
    let mut value = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for &c in p.iter().rev() {
        d2 = d2 * t + 2.0 * d1;
        d1 = d1 * t + value;
        value = value * t + c;
    }
    Ok((1.0 - t * t) * d2 - 2.0 * t * d1 + r.a * (r.a + 1.0) * value)
}

fn check_domain(t: f64) -> Result<()> {
    if !(t.is_finite() && t.abs() < 1.0) {
        return Err(Error::OutsideDomain { t });
    }
    Ok(())
}
