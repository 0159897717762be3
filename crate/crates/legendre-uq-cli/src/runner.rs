//! Subcommand implementations: `run`, `compare`, `validate`.
//!
//! Each takes a parsed config plus command-line overrides and returns
//! whether the command's own success criterion held; the binary maps a
//! `false` to a nonzero exit code. Refusals (unbounded support without the
//! override, malformed configs) surface as errors instead.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};

use legendre_uq::{
    mc_estimate, mc_ode_estimate, JointInputModel, McReport, MomentTable, TruncationOrder,
};

use crate::config::{ExperimentConfig, McEvaluator};
use crate::output::{self, RunArtifacts, Timings};

/// Command-line overrides that take precedence over config values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub override_unbounded: bool,
}

/// Compute the moment tables and write all report files.
pub fn run(config: &ExperimentConfig, overrides: &Overrides) -> Result<bool> {
    let model = config.build_model(overrides.override_unbounded)?;
    let validation = gate(&model)?;

    let started = Instant::now();
    let table = legendre_uq::moment_table(&model, &config.t_grid, &config.m_list)?;
    let engine_ms = started.elapsed().as_millis();
    let stabilization = table.stabilization(config.stabilization_tol)?;

    let mut mc_ms = None;
    let mc = if config.mc.enabled {
        let started = Instant::now();
        let report = sample_mc(config, overrides, &model)?;
        mc_ms = Some(started.elapsed().as_millis());
        Some(report)
    } else {
        None
    };

    let artifacts = RunArtifacts {
        config,
        model_description: model.describe(),
        validation: &validation,
        quadrature: model.quadrature(),
        table: &table,
        stabilization: &stabilization,
        mc: mc.as_ref(),
        timings: Timings { engine_ms, mc_ms },
    };
    let dir = overrides
        .out
        .clone()
        .unwrap_or_else(|| config.output.directory.clone());
    let written = output::write_reports(&dir, &artifacts)?;

    println!("model: {}", model.describe());
    for report in &stabilization {
        let verdict = match report.stabilized_at {
            Some(order) => format!("stabilized at M{order}"),
            None => "not stabilized within schedule".to_string(),
        };
        println!(
            "t = {}: {} (tol {})",
            output::format_sig6(report.t),
            verdict,
            output::format_sig6(report.tol)
        );
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(true)
}

/// Cross-check the moment engine against a fresh Monte Carlo run.
///
/// Every `(t, statistic)` cell must agree within four standard errors of the
/// Monte Carlo estimate; any miss makes the command fail. The engine column
/// is the largest configured truncation order, the Monte Carlo side follows
/// the config's evaluator choice — two genuinely different routes to the
/// same numbers.
pub fn compare(config: &ExperimentConfig, overrides: &Overrides) -> Result<bool> {
    let model = config.build_model(overrides.override_unbounded)?;
    gate(&model)?;

    let order = *config.m_list.last().expect("checked nonempty");
    // One engine serves both the consistency check (at the largest order)
    // and the optional published-value digest (at its own order).
    let mut orders = vec![order];
    if let Some(reference) = &config.reference {
        if reference.order != order {
            orders.insert(0, reference.order);
        }
    }
    let table = legendre_uq::moment_table(&model, &config.t_grid, &orders)?;
    let engine_column = orders.len() - 1;
    let mc = sample_mc(config, overrides, &model)?;

    println!(
        "engine at M{order} vs {} samples ({}), four-standard-error bands:",
        mc.sample_count, mc.evaluator
    );
    let mut misses = 0usize;
    let mut checks = 0usize;
    for (row, cell) in table.rows.iter().zip(&mc.cells) {
        let engine = &row[engine_column];
        for (name, ours, estimate, se) in [
            ("mean", engine.mean, cell.mean, cell.se_mean),
            ("variance", engine.variance, cell.variance, cell.se_variance),
        ] {
            checks += 1;
            // The absolute floor keeps exact-hit cells (degenerate models,
            // t = 0) from tripping on pure round-off when the SE is zero.
            let band = 4.0 * se + 1e-12 * ours.abs().max(1.0);
            let difference = (ours - estimate).abs();
            let ok = difference <= band;
            if !ok {
                misses += 1;
            }
            println!(
                "t = {}: {name} {} vs {} ± {} -> {} (|diff| = {}, band = {})",
                output::format_sig6(cell.t),
                output::format_sig6(ours),
                output::format_sig6(estimate),
                output::format_sig6(se),
                if ok { "CONSISTENT" } else { "INCONSISTENT" },
                output::format_sig6(difference),
                output::format_sig6(band),
            );
        }
    }
    println!("{} of {checks} checks consistent", checks - misses);
    if let Some(reference) = &config.reference {
        reference_digest(config, &table, reference);
    }
    Ok(misses == 0)
}

/// Print the model's validation report; fails when the report does.
pub fn validate(config: &ExperimentConfig, overrides: &Overrides) -> Result<bool> {
    let model = config.build_model(overrides.override_unbounded)?;
    let report = model.validate();
    println!("model: {}", model.describe());
    println!(
        "index nonnegative: {}",
        if report.a_nonnegative { "yes" } else { "NO" }
    );
    if report.a_bound.is_finite() {
        println!("index bound: {} (bounded)", report.a_bound);
    } else {
        println!("index bound: unbounded");
    }
    println!(
        "normalization: {} (tol {}, {})",
        report.normalization.value,
        report.normalization.tol,
        if report.normalization.pass { "ok" } else { "FAILED" }
    );
    if report.override_active {
        println!("unbounded-support override: active");
    }
    let pass = report.pass();
    println!("verdict: {}", if pass { "pass" } else { "FAIL" });
    if !pass && !report.bounded && !report.override_active {
        println!(
            "note: moment computation would refuse this model; \
             pass --override-unbounded to proceed anyway"
        );
    }
    Ok(pass)
}

/// Refuse models whose validation fails, with an actionable message.
fn gate(model: &JointInputModel) -> Result<legendre_uq::ValidationReport> {
    let report = model.validate();
    if !report.pass() {
        if !report.a_nonnegative {
            bail!("model validation failed: the index can go negative");
        }
        if !report.normalization.pass {
            bail!(
                "model validation failed: total mass {} misses 1 by more than {}",
                report.normalization.value,
                report.normalization.tol
            );
        }
        bail!(
            "model validation failed: the index is unbounded, so truncated moments \
             would not converge to anything certifiable; pass --override-unbounded \
             to compute them anyway"
        );
    }
    Ok(report)
}

fn sample_mc(
    config: &ExperimentConfig,
    overrides: &Overrides,
    model: &JointInputModel,
) -> Result<McReport> {
    let seed = overrides.seed.unwrap_or(config.mc.seed);
    let report = match config.mc.evaluator {
        McEvaluator::Series => mc_estimate(
            model,
            &config.t_grid,
            config.mc.samples,
            TruncationOrder::new(config.mc.series_order),
            seed,
        )?,
        McEvaluator::Ode => mc_ode_estimate(
            model,
            &config.t_grid,
            config.mc.samples,
            config.mc.ode_rel_tol,
            seed,
        )?,
    };
    Ok(report)
}

/// Side-by-side digest against published values: how far the engine column
/// sits from them, without judging (references are snapshots, not oracles).
fn reference_digest(
    config: &ExperimentConfig,
    table: &MomentTable,
    reference: &crate::config::ReferenceConfig,
) {
    let Some(column) = table
        .orders
        .iter()
        .position(|order| order.get() == reference.order)
    else {
        return;
    };
    let mut worst: Option<(f64, &str, f64)> = None;
    let mut note = |name: &'static str, published: &Option<Vec<f64>>, ours: &dyn Fn(usize) -> f64| {
        if let Some(published) = published {
            for (i, (&t, &reference_value)) in config.t_grid.iter().zip(published).enumerate() {
                let engine_value = ours(i);
                let scale = reference_value.abs().max(engine_value.abs());
                if scale == 0.0 {
                    continue;
                }
                let deviation = (engine_value - reference_value).abs() / scale;
                if worst.map_or(true, |(w, _, _)| deviation > w) {
                    worst = Some((deviation, name, t));
                }
            }
        }
    };
    note("expectation", &reference.expectation, &|i| {
        table.rows[i][column].mean
    });
    note("variance", &reference.variance, &|i| {
        table.rows[i][column].variance
    });
    if let Some((deviation, name, t)) = worst {
        println!(
            "reference \"{}\" at M{}: worst engine deviation {}% ({name} at t = {})",
            reference.label,
            reference.order,
            output::format_sig6(deviation * 100.0),
            output::format_sig6(t),
        );
    }
}
