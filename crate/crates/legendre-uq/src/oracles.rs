//! Independent validation oracles.
//!
//! The moment pipeline computes expectations analytically, which is exactly
//! why it needs watchdogs that share none of its machinery:
//!
//! * [`mc_estimate`] — plain Monte Carlo over model samples, each evaluated
//!   through the truncated series at a high order. Agreement is judged in
//!   units of the Monte Carlo standard errors the report carries.
//! * [`ode_solve`] / [`mc_ode_estimate`] — adaptive Runge-Kutta integration
//!   of the differential equation itself, realization by realization. This
//!   route never sees a series coefficient, so it also cross-checks the
//!   series kernel.
//!
//! Both are deliberately slower than the engine; they exist to catch bias,
//! not to be the production path. All sampling is reproducible: one seed,
//! one batch, bit-identical results regardless of thread count.

use rayon::prelude::*;

use crate::dist::JointInputModel;
use crate::error::{Error, Result};
use crate::series::{eval_filled, fill_even, fill_odd, Realization, TruncationOrder};

/// Series order used per Monte Carlo sample unless the caller picks another.
/// High enough that the truncation tail is invisible next to sampling noise
/// for any |t| <= 0.95 and index bound below ~30.
pub const DEFAULT_MC_EVAL_ORDER: TruncationOrder = TruncationOrder::new(120);

/// The ODE oracle refuses endpoints beyond this; the equation's
/// singularities at |t| = 1 make step control near them meaningless.
pub const ODE_GUARD: f64 = 0.95;

/// Realizations per parallel evaluation block. Fixed so that the
/// block-ordered reduction gives thread-count-independent results.
const MC_CHUNK: usize = 4_096;

const ODE_INIT_STEP: f64 = 1e-3;
const ODE_MAX_STEPS: usize = 1_000_000;
const ODE_ABS_TOL: f64 = 1e-12;

/// Monte Carlo summary for one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McCell {
    pub t: f64,
    pub mean: f64,
    /// Unbiased sample variance of the solution values.
    pub variance: f64,
    /// Standard error of `mean`.
    pub se_mean: f64,
    /// Standard error of `variance`, from the fourth central moment.
    pub se_variance: f64,
}

/// A full Monte Carlo run: per-`t` cells plus reproducibility provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub cells: Vec<McCell>,
    pub sample_count: usize,
    pub seed: u64,
    pub generator: &'static str,
    /// How each realization was turned into solution values,
    /// e.g. `"series(order = 120)"` or `"ode(rel_tol = 1e-8)"`.
    pub evaluator: String,
}

/// Monte Carlo moments via per-sample series evaluation.
///
/// Draws `count >= 2` realizations from the model, evaluates each at every
/// grid point through the order-`order` truncated series, and reports mean,
/// variance and their standard errors per point.
pub fn mc_estimate(
    model: &JointInputModel,
    t_grid: &[f64],
    count: usize,
    order: TruncationOrder,
    seed: u64,
) -> Result<McReport> {
    check_grid(t_grid, 1.0)?;
    check_count(count)?;
    let batch = model.sample(count, seed)?;
    let ne = order.even_len();
    let no = order.odd_len();
    let columns = evaluate_columns(
        &batch.realizations,
        t_grid,
        |(ce, co), r, t| eval_filled(ce, co, r.x0(), r.x1(), t),
        ne,
        no,
    );
    Ok(McReport {
        cells: summarize(t_grid, &columns, count),
        sample_count: count,
        seed,
        generator: batch.generator,
        evaluator: format!("series(order = {})", order.get()),
    })
}

/// Monte Carlo moments via direct ODE integration of every realization —
/// the slow route that bypasses the series entirely. Grid points must stay
/// within the integration guard `|t| <= 0.95`.
pub fn mc_ode_estimate(
    model: &JointInputModel,
    t_grid: &[f64],
    count: usize,
    rel_tol: f64,
    seed: u64,
) -> Result<McReport> {
    check_grid(t_grid, ODE_GUARD + f64::EPSILON)?;
    check_count(count)?;
    check_ode_tol(rel_tol)?;
    let batch = model.sample(count, seed)?;
    let mut columns = vec![vec![0.0f64; count]; t_grid.len()];
    let results: Vec<Result<Vec<Vec<f64>>>> = batch
        .realizations
        .par_chunks(MC_CHUNK)
        .map(|chunk| {
            let mut cols = vec![Vec::with_capacity(chunk.len()); t_grid.len()];
            for r in chunk {
                for (ti, &t) in t_grid.iter().enumerate() {
                    cols[ti].push(ode_solve(r, t, rel_tol)?);
                }
            }
            Ok(cols)
        })
        .collect();
    let mut offset = 0;
    for block in results {
        let block = block?;
        let len = block[0].len();
        for (ti, col) in block.into_iter().enumerate() {
            columns[ti][offset..offset + len].copy_from_slice(&col);
        }
        offset += len;
    }
    Ok(McReport {
        cells: summarize(t_grid, &columns, count),
        sample_count: count,
        seed,
        generator: batch.generator,
        evaluator: format!("ode(rel_tol = {rel_tol:.0e})"),
    })
}

fn check_grid(t_grid: &[f64], limit: f64) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidInput {
            what: "t grid",
            why: "need at least one evaluation point".into(),
        });
    }
    for &t in t_grid {
        if !(t.is_finite() && t.abs() < 1.0) {
            return Err(Error::OutsideDomain { t });
        }
        if t.abs() > limit {
            return Err(Error::OdeGuard { t, guard: ODE_GUARD });
        }
    }
    Ok(())
}

fn check_count(count: usize) -> Result<()> {
    if count < 2 {
        return Err(Error::InvalidInput {
            what: "sample count",
            why: "variance estimation needs at least 2 samples".into(),
        });
    }
    Ok(())
}

fn check_ode_tol(rel_tol: f64) -> Result<()> {
    if !(rel_tol.is_finite() && rel_tol > 0.0 && rel_tol <= 1e-2) {
        return Err(Error::InvalidInput {
            what: "ode tolerance",
            why: format!("rel_tol must be in (0, 1e-2], got {rel_tol}"),
        });
    }
    Ok(())
}

/// Evaluate all realizations on all grid points; column-major result,
/// block-parallel with order-preserving assembly.
fn evaluate_columns<F>(
    realizations: &[Realization],
    t_grid: &[f64],
    eval: F,
    ne: usize,
    no: usize,
) -> Vec<Vec<f64>>
where
    F: Fn((&[f64], &[f64]), &Realization, f64) -> f64 + Sync,
{
    let count = realizations.len();
    let mut columns = vec![vec![0.0f64; count]; t_grid.len()];
    let blocks: Vec<Vec<Vec<f64>>> = realizations
        .par_chunks(MC_CHUNK)
        .map(|chunk| {
            let mut ce = vec![0.0; ne];
            let mut co = vec![0.0; no];
            let mut cols = vec![Vec::with_capacity(chunk.len()); t_grid.len()];
            for r in chunk {
                fill_even(r.a(), &mut ce);
                fill_odd(r.a(), &mut co);
                for (ti, &t) in t_grid.iter().enumerate() {
                    cols[ti].push(eval((&ce, &co), r, t));
                }
            }
            cols
        })
        .collect();
    let mut offset = 0;
    for block in blocks {
        let len = block[0].len();
        for (ti, col) in block.into_iter().enumerate() {
            columns[ti][offset..offset + len].copy_from_slice(&col);
        }
        offset += len;
    }
    columns
}

/// Per-column statistics, all sequential in sample order so the outcome is
/// independent of how the evaluation was parallelized.
fn summarize(t_grid: &[f64], columns: &[Vec<f64>], count: usize) -> Vec<McCell> {
    let n = count as f64;
    t_grid
        .iter()
        .zip(columns)
        .map(|(&t, col)| {
            let mean = col.iter().sum::<f64>() / n;
            let mut m2 = 0.0;
            let mut m4 = 0.0;
            for &v in col {
                let d2 = (v - mean) * (v - mean);
                m2 += d2;
                m4 += d2 * d2;
            }
            let variance = m2 / (n - 1.0);
            let se_mean = (variance / n).sqrt();
            // Var(s^2) ~ (mu4 - sigma^4 (n-3)/(n-1)) / n with plug-in moments;
            // near-degenerate columns can push the bracket fractionally
            // negative through round-off, hence the clamp before the sqrt.
            let mu4 = m4 / n;
            let se_variance =
                ((mu4 - variance * variance * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
            McCell {
                t,
                mean,
                variance,
                se_mean,
                se_variance,
            }
        })
        .collect()
}

/// Solve the initial value problem for one realization out to `t_end` with
/// an adaptive embedded Runge-Kutta (Dormand-Prince 4/5) integrator.
///
/// `rel_tol` steers the per-step error control (absolute floor 1e-12).
/// Endpoints must satisfy `|t_end| <= 0.95`: the equation degenerates at
/// |t| = 1 and step control close to the singularity proves nothing.
pub fn ode_solve(r: &Realization, t_end: f64, rel_tol: f64) -> Result<f64> {
    if !(t_end.is_finite() && t_end.abs() <= ODE_GUARD) {
        return Err(Error::OdeGuard {
            t: t_end,
            guard: ODE_GUARD,
        });
    }
    check_ode_tol(rel_tol)?;
    if t_end == 0.0 {
        return Ok(r.x0());
    }
    let a_term = r.a() * (r.a() + 1.0);
    let rhs = |t: f64, y: [f64; 2]| [y[1], (2.0 * t * y[1] - a_term * y[0]) / (1.0 - t * t)];

    let dir = t_end.signum();
    let mut t = 0.0f64;
    let mut y = [r.x0(), r.x1()];
    let mut h = dir * ODE_INIT_STEP.min(t_end.abs());
    for _ in 0..ODE_MAX_STEPS {
        if (t_end - t) * dir <= 0.0 {
            return Ok(y[0]);
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        let (y_new, err) = dopri5_step(&rhs, t, y, h, rel_tol);
        if err <= 1.0 {
            t += h;
            y = y_new;
        }
        // Standard PI-free step factor with the usual safety clamps.
        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h.abs() < 1e-14 * t.abs().max(1.0) {
            return Err(Error::OdeStepUnderflow {
                reached: t,
                target: t_end,
            });
        }
    }
    Err(Error::OdeStepBudget {
        reached: t,
        target: t_end,
        max_steps: ODE_MAX_STEPS,
    })
}

/// One Dormand-Prince step: fifth-order candidate plus scaled error norm.
fn dopri5_step<F>(rhs: &F, t: f64, y: [f64; 2], h: f64, rel_tol: f64) -> ([f64; 2], f64)
where
    F: Fn(f64, [f64; 2]) -> [f64; 2],
{
    let k1 = rhs(t, y);
    let k2 = rhs(t + h / 5.0, axpy(&y, h, &[(0.2, &k1)]));
    let k3 = rhs(
        t + 3.0 / 10.0 * h,
        axpy(&y, h, &[(3.0 / 40.0, &k1), (9.0 / 40.0, &k2)]),
    );
    let k4 = rhs(
        t + 4.0 / 5.0 * h,
        axpy(
            &y,
            h,
            &[(44.0 / 45.0, &k1), (-56.0 / 15.0, &k2), (32.0 / 9.0, &k3)],
        ),
    );
    let k5 = rhs(
        t + 8.0 / 9.0 * h,
        axpy(
            &y,
            h,
            &[
                (19372.0 / 6561.0, &k1),
                (-25360.0 / 2187.0, &k2),
                (64448.0 / 6561.0, &k3),
                (-212.0 / 729.0, &k4),
            ],
        ),
    );
    let k6 = rhs(
        t + h,
        axpy(
            &y,
            h,
            &[
                (9017.0 / 3168.0, &k1),
                (-355.0 / 33.0, &k2),
                (46732.0 / 5247.0, &k3),
                (49.0 / 176.0, &k4),
                (-5103.0 / 18656.0, &k5),
            ],
        ),
    );
    let y_new = axpy(
        &y,
        h,
        &[
            (35.0 / 384.0, &k1),
            (500.0 / 1113.0, &k3),
            (125.0 / 192.0, &k4),
            (-2187.0 / 6784.0, &k5),
            (11.0 / 84.0, &k6),
        ],
    );
    let k7 = rhs(t + h, y_new);
    // Difference between the fifth- and embedded fourth-order solutions.
    let e = [
        71.0 / 57600.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let mut err_sq = 0.0;
    for i in 0..2 {
        let ei = h
            * (e[0] * k1[i] + e[1] * k3[i] + e[2] * k4[i] + e[3] * k5[i] + e[4] * k6[i]
                + e[5] * k7[i]);
        let scale = ODE_ABS_TOL + rel_tol * y[i].abs().max(y_new[i].abs());
        err_sq += (ei / scale) * (ei / scale);
    }
    (y_new, (err_sq / 2.0).sqrt())
}

fn axpy(y: &[f64; 2], h: f64, terms: &[(f64, &[f64; 2])]) -> [f64; 2] {
    let mut out = *y;
    for i in 0..2 {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}
