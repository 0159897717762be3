//! Deterministic moment pipeline: expectation and variance of the truncated
//! series solution as explicit polynomials in `t`.
//!
//! Write the truncated solution as
//!
//! ```text
//! X_M(t) = X0 * sum_m c[2m](A) t^(2m)  +  X1 * sum_m c[2m+1](A) t^(2m+1).
//! ```
//!
//! Taking expectations moves the randomness into `t`-independent weighted
//! moments of the coefficients:
//!
//! ```text
//! E[X_M(t)]   = sum_m  E[X0 c[2m](A)] t^(2m)  +  sum_m E[X1 c[2m+1](A)] t^(2m+1)
//! E[X_M(t)^2] = sum_{m,n} E[X0^2 c[2m]c[2n]]   t^(2(m+n))
//!             + sum_{m,n} E[X1^2 c[2m+1]c[2n+1]] t^(2(m+n)+2)
//!             + 2 sum_{m,n} E[X0 X1 c[2m]c[2n+1]] t^(2(m+n)+1)
//! ```
//!
//! and `Var = E[X^2] - E[X]^2`. The five coefficient-moment families (two
//! vectors, three matrices) form a cache computed once per model; every
//! `(t, M)` evaluation afterwards is a cheap polynomial read-off, exact in
//! `t`. For quadrature-backed models the cache is built at the base and the
//! doubled node count, and every row carries the node-doubling delta as a
//! convergence diagnostic.
//!
//! Cache accumulation is chunked: points are split into fixed-size blocks,
//! blocks are reduced in parallel, and the block partials are summed in
//! block order. The result is bitwise independent of the number of threads.

use rayon::prelude::*;

use crate::dist::{JointInputModel, MomentPoint, Points, QuadLevel};
use crate::error::{Error, Result};
use crate::series::{fill_even, fill_odd, TruncationOrder};

/// Fixed accumulation block size (points per parallel work item).
const CHUNK: usize = 16_384;

/// Negative-variance tolerance, relative to the second moment: rounding in
/// `E[X^2] - E[X]^2` may produce a slightly negative variance where the true
/// value is ~0; anything more negative than this is an internal inconsistency.
const NEG_VARIANCE_REL_TOL: f64 = 1e-9;

/// Coefficient-moment cache plus everything needed to turn it into mean and
/// variance values at arbitrary `(t, M <= max_order)`.
#[derive(Debug, Clone)]
pub struct MomentEngine {
    max_order: TruncationOrder,
    quad_tol: f64,
    /// Authoritative cache (refined level for quadrature routes).
    cache: MomentCache,
    /// Base-level cache, kept for node-doubling diagnostics. `None` when the
    /// model is exact.
    base: Option<MomentCache>,
}

#[derive(Debug, Clone)]
struct MomentCache {
    ne: usize,
    no: usize,
    /// ge[m] = E[X0 c_{2m}(A)]
    ge: Vec<f64>,
    /// go[m] = E[X1 c_{2m+1}(A)]
    go: Vec<f64>,
    /// hee[m * ne + n] = E[X0^2 c_{2m} c_{2n}]
    hee: Vec<f64>,
    /// hoo[m * no + n] = E[X1^2 c_{2m+1} c_{2n+1}]
    hoo: Vec<f64>,
    /// heo[m * no + n] = E[X0 X1 c_{2m} c_{2n+1}]
    heo: Vec<f64>,
}

impl MomentCache {
    fn zeros(ne: usize, no: usize) -> Self {
        Self {
            ne,
            no,
            ge: vec![0.0; ne],
            go: vec![0.0; no],
            hee: vec![0.0; ne * ne],
            hoo: vec![0.0; no * no],
            heo: vec![0.0; ne * no],
        }
    }

    fn accumulate(&mut self, pt: &MomentPoint, ce: &[f64], co: &[f64]) {
        let w0 = pt.w * pt.m0;
        for (g, &c) in self.ge.iter_mut().zip(ce) {
            *g += w0 * c;
        }
        let w1 = pt.w * pt.m1;
        for (g, &c) in self.go.iter_mut().zip(co) {
            *g += w1 * c;
        }
        // Symmetric matrices: accumulate the upper triangle only; mirrored
        // once at the end of the build.
        let w00 = pt.w * pt.s00;
        for m in 0..self.ne {
            let f = w00 * ce[m];
            let row = &mut self.hee[m * self.ne..(m + 1) * self.ne];
            for n in m..self.ne {
                row[n] += f * ce[n];
            }
        }
        let w11 = pt.w * pt.s11;
        for m in 0..self.no {
            let f = w11 * co[m];
            let row = &mut self.hoo[m * self.no..(m + 1) * self.no];
            for n in m..self.no {
                row[n] += f * co[n];
            }
        }
        let w01 = pt.w * pt.s01;
        for m in 0..self.ne {
            let f = w01 * ce[m];
            let row = &mut self.heo[m * self.no..(m + 1) * self.no];
            for (slot, &c) in row.iter_mut().zip(co) {
                *slot += f * c;
            }
        }
    }

    fn add(&mut self, other: &Self) {
        let pairs = [
            (&mut self.ge, &other.ge),
            (&mut self.go, &other.go),
            (&mut self.hee, &other.hee),
            (&mut self.hoo, &other.hoo),
            (&mut self.heo, &other.heo),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    fn mirror(&mut self) {
        for m in 0..self.ne {
            for n in (m + 1)..self.ne {
                self.hee[n * self.ne + m] = self.hee[m * self.ne + n];
            }
        }
        for m in 0..self.no {
            for n in (m + 1)..self.no {
                self.hoo[n * self.no + m] = self.hoo[m * self.no + n];
            }
        }
    }

    fn build(points: &Points<'_>, ne: usize, no: usize) -> Self {
        let len = points.len();
        let blocks = len.div_ceil(CHUNK).max(1);
        let partials: Vec<MomentCache> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut cache = MomentCache::zeros(ne, no);
                let mut ce = vec![0.0; ne];
                let mut co = vec![0.0; no];
                let end = ((b + 1) * CHUNK).min(len);
                for i in b * CHUNK..end {
                    let pt = points.get(i);
                    fill_even(pt.a, &mut ce);
                    fill_odd(pt.a, &mut co);
                    cache.accumulate(&pt, &ce, &co);
                }
                cache
            })
            .collect();
        let mut total = MomentCache::zeros(ne, no);
        for part in &partials {
            total.add(part);
        }
        total.mirror();
        total
    }

    /// Mean polynomial evaluated at `t`, truncated to the given index counts.
    fn mean_at(&self, t: f64, ne: usize, no: usize) -> f64 {
        let s = t * t;
        let mut even = 0.0;
        let mut pw = 1.0;
        for &g in &self.ge[..ne] {
            even += g * pw;
            pw *= s;
        }
        let mut odd = 0.0;
        let mut pw = t;
        for &g in &self.go[..no] {
            odd += g * pw;
            pw *= s;
        }
        even + odd
    }

    /// Second-moment polynomial evaluated at `t`.
    fn second_at(&self, t: f64, ne: usize, no: usize) -> f64 {
        let s = t * t;
        let top = 2 * ne.max(no);
        let mut spow = vec![1.0; top.max(1)];
        for k in 1..spow.len() {
            spow[k] = spow[k - 1] * s;
        }
        let mut ee = 0.0;
        for m in 0..ne {
            let row = &self.hee[m * self.ne..m * self.ne + ne];
            for (n, &h) in row.iter().enumerate() {
                ee += h * spow[m + n];
            }
        }
        let mut oo = 0.0;
        for m in 0..no {
            let row = &self.hoo[m * self.no..m * self.no + no];
            for (n, &h) in row.iter().enumerate() {
                oo += h * spow[m + n];
            }
        }
        let mut eo = 0.0;
        for m in 0..ne {
            let row = &self.heo[m * self.no..m * self.no + no];
            for (n, &h) in row.iter().enumerate() {
                eo += h * spow[m + n];
            }
        }
        ee + s * oo + 2.0 * t * eo
    }
}

/// Mean, variance and diagnostics for one `(t, M)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub t: f64,
    pub order: TruncationOrder,
    pub mean: f64,
    pub variance: f64,
    pub second_moment: f64,
    /// True when a slightly negative computed variance was clamped to zero.
    pub variance_clamped: bool,
    /// Node-doubling deltas (refined minus base); `None` for exact models.
    pub quad_delta_mean: Option<f64>,
    pub quad_delta_variance: Option<f64>,
    /// Whether both deltas sit within the model's quadrature tolerance;
    /// `None` for exact models.
    pub quad_converged: Option<bool>,
}

impl MomentEngine {
    /// Build the coefficient-moment cache for all truncation orders up to
    /// `max_order`. This is the expensive step; hold on to the engine and
    /// evaluate as many `(t, M)` cells as needed against it.
    pub fn new(model: &JointInputModel, max_order: TruncationOrder) -> Result<Self> {
        model.gate_unbounded()?;
        let ne = max_order.even_len();
        let no = max_order.odd_len();
        if model.is_exact() {
            let cache = MomentCache::build(&model.points(QuadLevel::Base), ne, no);
            return Ok(Self {
                max_order,
                quad_tol: model.quadrature().tol,
                cache,
                base: None,
            });
        }
        let base = MomentCache::build(&model.points(QuadLevel::Base), ne, no);
        let refined = MomentCache::build(&model.points(QuadLevel::Refined), ne, no);
        Ok(Self {
            max_order,
            quad_tol: model.quadrature().tol,
            cache: refined,
            base: Some(base),
        })
    }

    pub fn max_order(&self) -> TruncationOrder {
        self.max_order
    }

    /// Whether the cache came from exact sums rather than quadrature.
    pub fn is_exact(&self) -> bool {
        self.base.is_none()
    }

    fn check_cell(&self, t: f64, order: TruncationOrder) -> Result<()> {
        if !(t.is_finite() && t.abs() < 1.0) {
            return Err(Error::OutsideDomain { t });
        }
        if order > self.max_order {
            return Err(Error::OrderTooLarge {
                requested: order.get(),
                max: self.max_order.get(),
            });
        }
        Ok(())
    }

    /// `E[X_M(t)]`.
    pub fn expectation(&self, t: f64, order: TruncationOrder) -> Result<f64> {
        self.check_cell(t, order)?;
        Ok(self.cache.mean_at(t, order.even_len(), order.odd_len()))
    }

    /// `Var[X_M(t)]`.
    pub fn variance(&self, t: f64, order: TruncationOrder) -> Result<f64> {
        Ok(self.row(t, order)?.variance)
    }

    /// Full cell: mean, variance, clamp status and quadrature diagnostics.
    pub fn row(&self, t: f64, order: TruncationOrder) -> Result<MomentRow> {
        self.check_cell(t, order)?;
        let ne = order.even_len();
        let no = order.odd_len();
        let mean = self.cache.mean_at(t, ne, no);
        let second = self.cache.second_at(t, ne, no);
        let raw_var = second - mean * mean;
        let (variance, variance_clamped) = clamp_variance(raw_var, second)?;

        let (mut dm, mut dv, mut conv) = (None, None, None);
        if let Some(base) = &self.base {
            let mean_b = base.mean_at(t, ne, no);
            let second_b = base.second_at(t, ne, no);
            let var_b = second_b - mean_b * mean_b;
            let delta_m = mean - mean_b;
            let delta_v = raw_var - var_b;
            dm = Some(delta_m);
            dv = Some(delta_v);
            conv = Some(
                delta_m.abs() <= self.quad_tol * (1.0 + mean.abs())
                    && delta_v.abs() <= self.quad_tol * (1.0 + raw_var.abs()),
            );
        }
        Ok(MomentRow {
            t,
            order,
            mean,
            variance,
            second_moment: second,
            variance_clamped,
            quad_delta_mean: dm,
            quad_delta_variance: dv,
            quad_converged: conv,
        })
    }
}

fn clamp_variance(raw: f64, second: f64) -> Result<(f64, bool)> {
    if raw >= 0.0 {
        return Ok((raw, false));
    }
    if raw >= -NEG_VARIANCE_REL_TOL * second.abs().max(1.0) {
        return Ok((0.0, true));
    }
    Err(Error::NegativeVariance {
        variance: raw,
        second_moment: second,
    })
}

/// One-off `E[X_M(t)]`. Builds a full engine per call; for more than a single
/// cell, construct a [`MomentEngine`] and reuse it.
pub fn expectation(model: &JointInputModel, t: f64, order: TruncationOrder) -> Result<f64> {
    MomentEngine::new(model, order)?.expectation(t, order)
}

/// One-off `Var[X_M(t)]`; same cost caveat as [`expectation`].
pub fn variance(model: &JointInputModel, t: f64, order: TruncationOrder) -> Result<f64> {
    MomentEngine::new(model, order)?.variance(t, order)
}

/// Moment rows over a grid of evaluation points and truncation orders.
#[derive(Debug, Clone)]
pub struct MomentTable {
    pub t_grid: Vec<f64>,
    pub orders: Vec<TruncationOrder>,
    /// `rows[i][j]` is the cell at `t_grid[i]`, `orders[j]`.
    pub rows: Vec<Vec<MomentRow>>,
}

impl MomentTable {
    /// Stabilization verdicts per grid point, judged along this table's own
    /// order schedule (see [`stabilization_check`] for the step semantics).
    /// Needs at least two orders; no moments are recomputed.
    pub fn stabilization(&self, tol: f64) -> Result<Vec<StabilizationReport>> {
        check_stabilization_tol(tol)?;
        if self.orders.len() < 2 {
            return Err(Error::InvalidInput {
                what: "truncation schedule",
                why: "stabilization needs at least 2 orders".into(),
            });
        }
        Ok(self
            .t_grid
            .iter()
            .zip(&self.rows)
            .map(|(&t, cells)| {
                let (steps, stabilized_at) = stabilization_steps(cells, tol);
                StabilizationReport {
                    t,
                    tol,
                    steps,
                    stabilized_at,
                }
            })
            .collect())
    }
}

/// Evaluate the mean/variance table for `t_grid` x `orders` off one shared
/// cache built at the largest order.
pub fn moment_table(
    model: &JointInputModel,
    t_grid: &[f64],
    orders: &[usize],
) -> Result<MomentTable> {
    if t_grid.is_empty() {
        return Err(Error::InvalidInput {
            what: "t grid",
            why: "need at least one evaluation point".into(),
        });
    }
    let orders = checked_schedule(orders, 1)?;
    let engine = MomentEngine::new(model, *orders.last().expect("nonempty"))?;
    let rows = t_grid
        .iter()
        .map(|&t| orders.iter().map(|&m| engine.row(t, m)).collect())
        .collect::<Result<Vec<Vec<MomentRow>>>>()?;
    Ok(MomentTable {
        t_grid: t_grid.to_vec(),
        orders,
        rows,
    })
}

/// Relative-change step between two consecutive truncation orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationStep {
    pub from: usize,
    pub to: usize,
    pub mean_change: f64,
    pub variance_change: f64,
    pub pass: bool,
}

/// Outcome of [`stabilization_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizationReport {
    pub t: f64,
    pub tol: f64,
    pub steps: Vec<StabilizationStep>,
    /// Smallest schedule entry whose step to the next entry moved both mean
    /// and variance by at most `tol` (relatively). The last entry can never
    /// be certified — there is nothing beyond it to compare against.
    pub stabilized_at: Option<usize>,
}

/// Truncation-order stabilization probe at a single `t`.
///
/// Computes mean and variance along the ascending `schedule` of orders and
/// flags the first order already stabilized: the relative change to the next
/// scheduled order is at most `tol` for both statistics. Relative change is
/// `|next - prev| / max(|prev|, |next|)`, zero when the values are equal.
pub fn stabilization_check(
    model: &JointInputModel,
    t: f64,
    schedule: &[usize],
    tol: f64,
) -> Result<StabilizationReport> {
    check_stabilization_tol(tol)?;
    let schedule = checked_schedule(schedule, 2)?;
    let engine = MomentEngine::new(model, *schedule.last().expect("nonempty"))?;
    let cells = schedule
        .iter()
        .map(|&m| engine.row(t, m))
        .collect::<Result<Vec<MomentRow>>>()?;
    let (steps, stabilized_at) = stabilization_steps(&cells, tol);
    Ok(StabilizationReport {
        t,
        tol,
        steps,
        stabilized_at,
    })
}

fn check_stabilization_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::InvalidInput {
            what: "stabilization tolerance",
            why: format!("must be finite and >= 0, got {tol}"),
        });
    }
    Ok(())
}

fn stabilization_steps(cells: &[MomentRow], tol: f64) -> (Vec<StabilizationStep>, Option<usize>) {
    let mut steps = Vec::with_capacity(cells.len().saturating_sub(1));
    let mut stabilized_at = None;
    for pair in cells.windows(2) {
        let mean_change = rel_change(pair[0].mean, pair[1].mean);
        let variance_change = rel_change(pair[0].variance, pair[1].variance);
        let pass = mean_change <= tol && variance_change <= tol;
        if pass && stabilized_at.is_none() {
            stabilized_at = Some(pair[0].order.get());
        }
        steps.push(StabilizationStep {
            from: pair[0].order.get(),
            to: pair[1].order.get(),
            mean_change,
            variance_change,
            pass,
        });
    }
    (steps, stabilized_at)
}

fn rel_change(prev: f64, next: f64) -> f64 {
    let diff = (next - prev).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / prev.abs().max(next.abs())
    }
}

fn checked_schedule(orders: &[usize], min_len: usize) -> Result<Vec<TruncationOrder>> {
    if orders.len() < min_len {
        return Err(Error::InvalidInput {
            what: "truncation schedule",
            why: format!("need at least {min_len} order(s), got {}", orders.len()),
        });
    }
    if orders.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidInput {
            what: "truncation schedule",
            why: format!("orders must be strictly increasing, got {orders:?}"),
        });
    }
    Ok(orders.iter().map(|&m| TruncationOrder::new(m)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Atom;
    use std::sync::OnceLock;

    fn dirichlet() -> JointInputModel {
        JointInputModel::dirichlet([5.0, 1.0, 2.0, 3.0]).unwrap()
    }

    /// Shared M=80 engine so the expensive cube quadrature runs once.
    fn dirichlet_engine() -> &'static MomentEngine {
        static ENGINE: OnceLock<MomentEngine> = OnceLock::new();
        ENGINE.get_or_init(|| MomentEngine::new(&dirichlet(), TruncationOrder::new(80)).unwrap())
    }

    fn close(got: f64, want: f64, tol: f64) -> bool {
        (got - want).abs() <= tol
    }

    /// Spacing of the sixth significant digit of `x`; reference values below
    /// are printed to six digits, so the truth lies within half of this.
    fn ulp6(x: f64) -> f64 {
        10f64.powi(x.abs().log10().floor() as i32 - 5)
    }

    #[test]
    fn dirichlet_values_at_zero_are_the_input_moments() {
        let eng = dirichlet_engine();
        let m = TruncationOrder::new(80);
        // At t = 0 the series collapses to X0: mean 1/11, variance of a
        // Dirichlet marginal with alpha = 1 out of total 11.
        assert!(close(eng.expectation(0.0, m).unwrap(), 1.0 / 11.0, 1e-12));
        assert!(close(
            eng.variance(0.0, m).unwrap(),
            0.006_887_052_341_597_796,
            1e-12
        ));
    }

    #[test]
    fn dirichlet_interior_cells_match_independent_quadrature() {
        // Reference values from an independent high-resolution tensor
        // quadrature of the same model (6 significant digits).
        let eng = dirichlet_engine();
        let cases = [
            (0.5, 10, 0.180_166, 0.008_444_37),
            (0.5, 40, 0.180_172, 0.008_444_82),
            (0.9, 10, 0.273_962, 0.023_617_5),
            (0.9, 80, 0.281_693, 0.026_269_9),
        ];
        for (t, m, want_mean, want_var) in cases {
            let row = eng.row(t, TruncationOrder::new(m)).unwrap();
            assert!(
                close(row.mean, want_mean, 0.51 * ulp6(want_mean)),
                "mean at t={t} M={m}: {}",
                row.mean
            );
            assert!(
                close(row.variance, want_var, 0.51 * ulp6(want_var)),
                "variance at t={t} M={m}: {}",
                row.variance
            );
            assert_eq!(row.quad_converged, Some(true));
            assert!(row.quad_delta_mean.unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn multinomial_cells_are_exact_sums() {
        let model = JointInputModel::multinomial(10, [0.2, 0.3, 0.5]).unwrap();
        let eng = MomentEngine::new(&model, TruncationOrder::new(80)).unwrap();
        assert!(eng.is_exact());
        let row = eng.row(0.0, TruncationOrder::new(80)).unwrap();
        assert!(close(row.mean, 3.0, 1e-12));
        assert!(close(row.variance, 2.1, 1e-11));
        assert_eq!(row.quad_delta_mean, None);
        assert_eq!(row.quad_converged, None);
        // Interior reference cells (independent computation, 6 digits).
        let r = eng.row(0.5, TruncationOrder::new(20)).unwrap();
        assert!(close(r.mean, 2.971_54, 0.51 * ulp6(2.971_54)), "{}", r.mean);
        assert!(close(r.variance, 7.120_77, 0.51 * ulp6(7.120_77)), "{}", r.variance);
        let r = eng.row(0.9, TruncationOrder::new(80)).unwrap();
        assert!(close(r.mean, 0.670_550, 0.51 * ulp6(0.670_550)), "{}", r.mean);
        assert!(close(r.variance, 31.632_4, 0.51 * ulp6(31.632_4)), "{}", r.variance);
    }

    #[test]
    fn gaussian_values_at_zero_match_closed_forms() {
        let model = JointInputModel::truncated_multinormal(
            [10.0, -2.0, 1.0],
            [[1.0, 0.01, -0.02], [0.01, 4.0, 2.0], [-0.02, 2.0, 4.0]],
            Some([6.0, 14.0]),
        )
        .unwrap();
        let eng = MomentEngine::new(&model, TruncationOrder::new(80)).unwrap();
        let m = TruncationOrder::new(80);
        // Symmetric window: E[X0] = mu_1 exactly; Var[X0] folds the window's
        // slightly shrunken index variance through the regression slope.
        assert!(close(eng.expectation(0.0, m).unwrap(), -2.0, 1e-12));
        assert!(close(eng.variance(0.0, m).unwrap(), 3.999_999_892_929, 1e-9));
    }

    #[test]
    fn zero_odd_input_makes_consecutive_orders_identical() {
        // With X1 = 0 the odd cache is exactly zero, so M = 2k and
        // M = 2k + 1 must agree bitwise: the extra odd term adds nothing.
        let atoms = vec![
            Atom { a: 2.3, x0: 1.2, x1: 0.0, p: 0.5 },
            Atom { a: 0.7, x0: -0.4, x1: 0.0, p: 0.5 },
        ];
        let model = JointInputModel::from_atoms(atoms).unwrap();
        let eng = MomentEngine::new(&model, TruncationOrder::new(21)).unwrap();
        for t in [0.0, 0.3, -0.85] {
            for k in [0usize, 4, 10] {
                let even = eng.row(t, TruncationOrder::new(2 * k)).unwrap();
                let odd = eng.row(t, TruncationOrder::new(2 * k + 1)).unwrap();
                assert_eq!(even.mean, odd.mean, "t={t} k={k}");
                assert_eq!(even.variance, odd.variance, "t={t} k={k}");
            }
        }
    }

    #[test]
    fn degenerate_inputs_have_zero_variance() {
        // A single atom is deterministic: the variance is zero up to the
        // clamp of double-summation rounding.
        let model = JointInputModel::from_atoms(vec![Atom {
            a: 1.7,
            x0: 1.0,
            x1: -2.0,
            p: 1.0,
        }])
        .unwrap();
        let eng = MomentEngine::new(&model, TruncationOrder::new(40)).unwrap();
        for t in [0.0, 0.5, 0.9] {
            let row = eng.row(t, TruncationOrder::new(40)).unwrap();
            assert!(
                row.variance == 0.0 || row.variance < 1e-12 * row.second_moment.abs(),
                "t={t}: {} (clamped: {})",
                row.variance,
                row.variance_clamped
            );
            assert!(row.variance >= 0.0);
        }
    }

    #[test]
    fn cell_requests_are_validated() {
        let model = JointInputModel::multinomial(3, [0.2, 0.3, 0.5]).unwrap();
        let eng = MomentEngine::new(&model, TruncationOrder::new(20)).unwrap();
        assert!(matches!(
            eng.expectation(1.0, TruncationOrder::new(10)),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(
            eng.expectation(0.5, TruncationOrder::new(21)),
            Err(Error::OrderTooLarge { requested: 21, max: 20 })
        ));
    }

    #[test]
    fn engine_results_do_not_depend_on_thread_count() {
        let model = dirichlet()
            .with_quadrature(crate::dist::QuadratureSpec { nodes: 16, tol: 1e-6 })
            .unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let eng = MomentEngine::new(&model, TruncationOrder::new(24)).unwrap();
                let row = eng.row(0.8, TruncationOrder::new(24)).unwrap();
                (row.mean, row.variance)
            })
        };
        let single = run(1);
        let quad = run(4);
        let many = run(13);
        assert_eq!(single, quad);
        assert_eq!(single, many);
    }

    #[test]
    fn one_off_helpers_agree_with_the_engine() {
        let model = JointInputModel::multinomial(5, [0.2, 0.3, 0.5]).unwrap();
        let eng = MomentEngine::new(&model, TruncationOrder::new(12)).unwrap();
        let m = TruncationOrder::new(12);
        assert_eq!(
            expectation(&model, 0.4, m).unwrap(),
            eng.expectation(0.4, m).unwrap()
        );
        assert_eq!(variance(&model, 0.4, m).unwrap(), eng.variance(0.4, m).unwrap());
    }

    #[test]
    fn moment_table_layout_and_validation() {
        let model = JointInputModel::multinomial(4, [0.2, 0.3, 0.5]).unwrap();
        let table = moment_table(&model, &[0.0, 0.5], &[10, 20]).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].len(), 2);
        assert_eq!(table.rows[1][1].t, 0.5);
        assert_eq!(table.rows[1][1].order.get(), 20);

        assert!(moment_table(&model, &[], &[10]).is_err());
        assert!(moment_table(&model, &[0.5], &[]).is_err());
        assert!(moment_table(&model, &[0.5], &[20, 10]).is_err());
        assert!(moment_table(&model, &[1.0], &[10]).is_err());
    }

    #[test]
    fn stabilization_on_the_dirichlet_model() {
        // Frozen behavior from the independent quadrature oracle: at t = 0.5
        // the 20 -> 40 step is ~1.5e-8 relative, so M = 20 is certified at
        // 1e-6; at t = 0.9 no step on this schedule gets under 1e-6.
        let model = dirichlet();
        let rep = stabilization_check(&model, 0.5, &[10, 20, 40, 80], 1e-6).unwrap();
        assert_eq!(rep.stabilized_at, Some(20));
        assert!(!rep.steps[0].pass && rep.steps[1].pass);
        assert!(close(rep.steps[0].mean_change, 2.98e-5, 2e-7));
        assert!(close(rep.steps[1].variance_change, 2.78e-8, 2e-10));

        let rep = stabilization_check(&model, 0.9, &[10, 20, 40, 80], 1e-6).unwrap();
        assert_eq!(rep.stabilized_at, None);
        assert!(rep.steps.iter().all(|s| !s.pass));
        // A loose tolerance certifies the 40 -> 80 step instead.
        let rep = stabilization_check(&model, 0.9, &[10, 20, 40, 80], 1e-2).unwrap();
        assert_eq!(rep.stabilized_at, Some(40));
    }

    #[test]
    fn stabilization_schedule_is_validated() {
        let model = JointInputModel::multinomial(3, [0.2, 0.3, 0.5]).unwrap();
        assert!(stabilization_check(&model, 0.5, &[10], 1e-6).is_err());
        assert!(stabilization_check(&model, 0.5, &[10, 10], 1e-6).is_err());
        assert!(stabilization_check(&model, 0.5, &[20, 10], 1e-6).is_err());
        assert!(stabilization_check(&model, 0.5, &[10, 20], -1.0).is_err());
        assert!(stabilization_check(&model, 0.5, &[10, 20], f64::NAN).is_err());
    }

    #[test]
    fn exact_zero_changes_pass_a_zero_tolerance() {
        // Polynomial solutions: each atom excites only the series of its
        // terminating parity (a = 2 even, a = 3 odd), so beyond M = 3
        // nothing changes and even tol = 0 certifies.
        let atoms = vec![
            Atom { a: 2.0, x0: 1.0, x1: 0.0, p: 0.5 },
            Atom { a: 3.0, x0: 0.0, x1: 1.0, p: 0.5 },
        ];
        let model = JointInputModel::from_atoms(atoms).unwrap();
        let rep = stabilization_check(&model, 0.6, &[4, 6, 8], 0.0).unwrap();
        assert_eq!(rep.stabilized_at, Some(4));
        assert_eq!(rep.steps[0].mean_change, 0.0);
        assert_eq!(rep.steps[0].variance_change, 0.0);
    }
}
