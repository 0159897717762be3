//! Report writers: CSV tables, a human-readable markdown report, and a
//! full-precision JSON manifest.
//!
//! The CSVs round every value to six significant digits — enough to compare
//! runs by eye or diff, stable across machines. Anything downstream that
//! needs exact numbers should read `manifest.json`, which serializes the
//! unrounded `f64`s.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use legendre_uq::{
    McReport, MomentTable, StabilizationReport, ValidationReport,
};

use crate::config::ExperimentConfig;

/// Format with six significant digits, `%g`-style: positional notation while
/// the decimal exponent is in `[-4, 5]`, scientific outside, trailing
/// fractional zeros trimmed either way.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // "{:.5e}" rounds to exactly six significant digits: "d.dddddEexp".
    let rounded = format!("{x:.5e}");
    let (mantissa, exp) = rounded.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("decimal exponent");
    let sign = if mantissa.starts_with('-') { "-" } else { "" };
    let digits: Vec<u8> = mantissa
        .bytes()
        .filter(|b| b.is_ascii_digit())
        .collect();
    debug_assert_eq!(digits.len(), 6);

    let mut out = String::from(sign);
    if !(-4..6).contains(&exp) {
        let trimmed = trim_trailing_zeros(&digits);
        out.push(trimmed[0] as char);
        if trimmed.len() > 1 {
            out.push('.');
            out.push_str(std::str::from_utf8(&trimmed[1..]).expect("ascii"));
        }
        let _ = write!(out, "e{exp}");
    } else if exp >= 0 {
        let int_len = exp as usize + 1;
        if int_len >= digits.len() {
            out.push_str(std::str::from_utf8(&digits).expect("ascii"));
            out.extend(std::iter::repeat('0').take(int_len - digits.len()));
        } else {
            out.push_str(std::str::from_utf8(&digits[..int_len]).expect("ascii"));
            let frac = trim_trailing_zeros(&digits[int_len..]);
            if !(frac.len() == 1 && frac[0] == b'0') {
                out.push('.');
                out.push_str(std::str::from_utf8(frac).expect("ascii"));
            }
        }
    } else {
        out.push_str("0.");
        out.extend(std::iter::repeat('0').take((-exp) as usize - 1));
        let frac = trim_trailing_zeros(&digits);
        out.push_str(std::str::from_utf8(frac).expect("ascii"));
    }
    out
}

/// Drop trailing zeros but keep at least one digit.
fn trim_trailing_zeros(digits: &[u8]) -> &[u8] {
    let end = digits
        .iter()
        .rposition(|&b| b != b'0')
        .map_or(1, |i| i + 1);
    &digits[..end]
}

/// Everything one `run` produced, bundled for the writers.
pub struct RunArtifacts<'a> {
    pub config: &'a ExperimentConfig,
    pub model_description: String,
    pub validation: &'a ValidationReport,
    /// Quadrature spec the model actually ran with (irrelevant for exact
    /// models, which never consult it).
    pub quadrature: legendre_uq::QuadratureSpec,
    pub table: &'a MomentTable,
    pub stabilization: &'a [StabilizationReport],
    pub mc: Option<&'a McReport>,
    pub timings: Timings,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Timings {
    pub engine_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_ms: Option<u128>,
}

/// Write all report files into `dir`, returning the paths written.
pub fn write_reports(dir: &Path, artifacts: &RunArtifacts) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let files = [
        ("expectation.csv", moment_csv(artifacts, Statistic::Mean)),
        ("variance.csv", moment_csv(artifacts, Statistic::Variance)),
        ("stabilization.csv", stabilization_csv(artifacts)),
        ("tables.md", markdown_report(artifacts)),
        ("manifest.json", manifest_json(artifacts)?),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, content) in files {
        let path = dir.join(name);
        fs::write(&path, content)
            .with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Copy, PartialEq)]
enum Statistic {
    Mean,
    Variance,
}

fn moment_csv(artifacts: &RunArtifacts, stat: Statistic) -> String {
    let table = artifacts.table;
    let mut out = String::from("t");
    for order in &table.orders {
        let _ = write!(out, ",{order}");
    }
    if artifacts.mc.is_some() {
        out.push_str(",MC");
    }
    out.push('\n');
    for (i, &t) in table.t_grid.iter().enumerate() {
        out.push_str(&format_sig6(t));
        for cell in &table.rows[i] {
            let value = match stat {
                Statistic::Mean => cell.mean,
                Statistic::Variance => cell.variance,
            };
            let _ = write!(out, ",{}", format_sig6(value));
        }
        if let Some(mc) = artifacts.mc {
            let value = match stat {
                Statistic::Mean => mc.cells[i].mean,
                Statistic::Variance => mc.cells[i].variance,
            };
            let _ = write!(out, ",{}", format_sig6(value));
        }
        out.push('\n');
    }
    out
}

fn stabilization_csv(artifacts: &RunArtifacts) -> String {
    let mut out =
        String::from("t,from_order,to_order,mean_rel_change,variance_rel_change,within_tol,stabilized_at\n");
    for report in artifacts.stabilization {
        let verdict = report
            .stabilized_at
            .map_or(String::new(), |m| m.to_string());
        for step in &report.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                format_sig6(report.t),
                step.from,
                step.to,
                format_sig6(step.mean_change),
                format_sig6(step.variance_change),
                step.pass,
                verdict,
            );
        }
    }
    out
}

fn markdown_report(artifacts: &RunArtifacts) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Moment report: {}\n", artifacts.model_description);

    let v = artifacts.validation;
    let bound = if v.a_bound.is_finite() {
        format_sig6(v.a_bound)
    } else {
        "unbounded".to_string()
    };
    let _ = writeln!(out, "- validation: {}", if v.pass() { "pass" } else { "FAIL" });
    let _ = writeln!(out, "- index bound: {bound}");
    let _ = writeln!(
        out,
        "- normalization: {} (tol {})",
        v.normalization.value,
        format_sig6(v.normalization.tol)
    );
    if v.override_active {
        let _ = writeln!(out, "- unbounded-support override is ACTIVE");
    }
    if let Some(quad) = quadrature_summary(artifacts) {
        let converged = if quad.all_converged {
            "converged at every cell"
        } else {
            "NOT CONVERGED at some cells"
        };
        let _ = writeln!(
            out,
            "- quadrature: {} nodes, tol {}; node-doubling {} \
             (max |delta|: mean {}, variance {})",
            quad.nodes,
            format_sig6(quad.tol),
            converged,
            format_sig6(quad.max_delta_mean),
            format_sig6(quad.max_delta_variance),
        );
    } else {
        let _ = writeln!(out, "- moments computed exactly (finite atom support)");
    }
    if let Some(mc) = artifacts.mc {
        let _ = writeln!(
            out,
            "- Monte Carlo: {} samples, seed {}, generator {}, evaluator {}",
            mc.sample_count, mc.seed, mc.generator, mc.evaluator
        );
    }
    out.push('\n');

    for (title, stat) in [("Expectation", Statistic::Mean), ("Variance", Statistic::Variance)] {
        let _ = writeln!(out, "## {title}\n");
        out.push_str(&markdown_moment_table(artifacts, stat));
        out.push('\n');
    }

    let clamped: Vec<String> = artifacts
        .table
        .rows
        .iter()
        .flatten()
        .filter(|cell| cell.variance_clamped)
        .map(|cell| format!("t = {}, {}", format_sig6(cell.t), cell.order))
        .collect();
    if !clamped.is_empty() {
        let _ = writeln!(
            out,
            "Variance was clamped to zero (tiny negative round-off) at: {}.\n",
            clamped.join("; ")
        );
    }

    let tol = format_sig6(artifacts.config.stabilization_tol);
    let _ = writeln!(out, "## Truncation stabilization (tol = {tol})\n");
    let _ = writeln!(out, "| t | verdict |");
    let _ = writeln!(out, "|--:|:--|");
    for report in artifacts.stabilization {
        let _ = writeln!(
            out,
            "| {} | {} |",
            format_sig6(report.t),
            stabilization_verdict(report)
        );
    }
    out.push('\n');

    if let Some(notes) = reference_notes(artifacts) {
        out.push_str(&notes);
    }
    out
}

fn markdown_moment_table(artifacts: &RunArtifacts, stat: Statistic) -> String {
    let table = artifacts.table;
    let mut out = String::from("| t |");
    for order in &table.orders {
        let _ = write!(out, " {order} |");
    }
    if let Some(mc) = artifacts.mc {
        let _ = write!(out, " MC (n = {}) |", mc.sample_count);
    }
    out.push('\n');
    out.push_str("|--:|");
    for _ in &table.orders {
        out.push_str("--:|");
    }
    if artifacts.mc.is_some() {
        out.push_str("--:|");
    }
    out.push('\n');
    for (i, &t) in table.t_grid.iter().enumerate() {
        let _ = write!(out, "| {} |", format_sig6(t));
        for cell in &table.rows[i] {
            let value = match stat {
                Statistic::Mean => cell.mean,
                Statistic::Variance => cell.variance,
            };
            let _ = write!(out, " {} |", format_sig6(value));
        }
        if let Some(mc) = artifacts.mc {
            let (value, se) = match stat {
                Statistic::Mean => (mc.cells[i].mean, mc.cells[i].se_mean),
                Statistic::Variance => (mc.cells[i].variance, mc.cells[i].se_variance),
            };
            let _ = write!(out, " {} ± {} |", format_sig6(value), format_sig6(se));
        }
        out.push('\n');
    }
    out
}

fn stabilization_verdict(report: &StabilizationReport) -> String {
    match report.stabilized_at {
        Some(order) => {
            let step = report
                .steps
                .iter()
                .find(|s| s.from == order)
                .expect("certified order has a recorded step");
            format!(
                "stabilized at M{order} (step to M{}: mean {}, variance {})",
                step.to,
                format_sig6(step.mean_change),
                format_sig6(step.variance_change)
            )
        }
        None => match report.steps.last() {
            Some(last) => format!(
                "not stabilized within schedule (last step M{} -> M{}: mean {}, variance {})",
                last.from,
                last.to,
                format_sig6(last.mean_change),
                format_sig6(last.variance_change)
            ),
            None => "schedule too short to judge".to_string(),
        },
    }
}

/// Deviation notes against externally published values, when the config
/// carries them. Deviations above 1% are called out individually.
fn reference_notes(artifacts: &RunArtifacts) -> Option<String> {
    let reference = artifacts.config.reference.as_ref()?;
    let table = artifacts.table;
    let column = table
        .orders
        .iter()
        .position(|order| order.get() == reference.order)?;
    let mut out = String::new();
    let _ = writeln!(out, "## Reference comparison: {}\n", reference.label);
    let _ = writeln!(
        out,
        "Engine columns are compared at M{}; listed below are relative \
         deviations above 1%.\n",
        reference.order
    );
    let mut flagged = 0usize;
    let mut checked = 0usize;
    let mut compare = |name: &str, ours: &dyn Fn(usize) -> f64, published: &Option<Vec<f64>>| {
        if let Some(published) = published {
            for (i, (&t, &reference_value)) in
                table.t_grid.iter().zip(published).enumerate()
            {
                checked += 1;
                let engine_value = ours(i);
                let scale = reference_value.abs().max(engine_value.abs());
                let deviation = if scale == 0.0 {
                    0.0
                } else {
                    (engine_value - reference_value).abs() / scale
                };
                if deviation > 0.01 {
                    flagged += 1;
                    let _ = writeln!(
                        out,
                        "- {name} at t = {}: ours {}, published {} ({}% apart)",
                        format_sig6(t),
                        format_sig6(engine_value),
                        format_sig6(reference_value),
                        format_sig6(deviation * 100.0),
                    );
                }
            }
        }
    };
    compare(
        "expectation",
        &|i| table.rows[i][column].mean,
        &reference.expectation,
    );
    compare(
        "variance",
        &|i| table.rows[i][column].variance,
        &reference.variance,
    );
    if let Some(mc) = artifacts.mc {
        compare(
            "MC expectation",
            &|i| mc.cells[i].mean,
            &reference.mc_expectation,
        );
        compare(
            "MC variance",
            &|i| mc.cells[i].variance,
            &reference.mc_variance,
        );
    }
    let _ = writeln!(
        out,
        "\n{flagged} of {checked} compared values deviate by more than 1%.\n"
    );
    Some(out)
}

// --- manifest -------------------------------------------------------------

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    model: &'a str,
    validation: ValidationEcho,
    t_grid: &'a [f64],
    orders: Vec<usize>,
    /// `expectation[i][j]` is the mean at `t_grid[i]`, `orders[j]`;
    /// full precision, same layout for the other grids.
    expectation: Vec<Vec<f64>>,
    variance: Vec<Vec<f64>>,
    variance_clamped: Vec<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quadrature: Option<QuadratureEcho>,
    stabilization: Vec<StabilizationEcho>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc: Option<McEcho<'a>>,
    timings_ms: Timings,
}

#[derive(Serialize)]
struct ValidationEcho {
    kind: String,
    /// `None` encodes an unbounded index (JSON has no infinity).
    a_bound: Option<f64>,
    bounded: bool,
    a_nonnegative: bool,
    normalization_value: f64,
    normalization_tol: f64,
    normalization_pass: bool,
    override_active: bool,
    pass: bool,
}

impl From<&ValidationReport> for ValidationEcho {
    fn from(v: &ValidationReport) -> Self {
        Self {
            kind: v.kind.clone(),
            a_bound: v.a_bound.is_finite().then_some(v.a_bound),
            bounded: v.bounded,
            a_nonnegative: v.a_nonnegative,
            normalization_value: v.normalization.value,
            normalization_tol: v.normalization.tol,
            normalization_pass: v.normalization.pass,
            override_active: v.override_active,
            pass: v.pass(),
        }
    }
}

#[derive(Serialize)]
struct QuadratureEcho {
    nodes: usize,
    tol: f64,
    max_delta_mean: f64,
    max_delta_variance: f64,
    all_converged: bool,
}

#[derive(Serialize)]
struct StabilizationEcho {
    t: f64,
    stabilized_at: Option<usize>,
    steps: Vec<StepEcho>,
}

#[derive(Serialize)]
struct StepEcho {
    from: usize,
    to: usize,
    mean_rel_change: f64,
    variance_rel_change: f64,
    within_tol: bool,
}

#[derive(Serialize)]
struct McEcho<'a> {
    sample_count: usize,
    seed: u64,
    generator: &'a str,
    evaluator: &'a str,
    mean: Vec<f64>,
    variance: Vec<f64>,
    se_mean: Vec<f64>,
    se_variance: Vec<f64>,
}

fn quadrature_summary(artifacts: &RunArtifacts) -> Option<QuadratureEcho> {
    let cells: Vec<_> = artifacts.table.rows.iter().flatten().collect();
    // Exact models carry no quadrature diagnostics at all.
    cells.first()?.quad_delta_mean?;
    let fold = |pick: &dyn Fn(&legendre_uq::MomentRow) -> Option<f64>| {
        cells
            .iter()
            .filter_map(|cell| pick(cell))
            .fold(0.0f64, |acc, delta| acc.max(delta.abs()))
    };
    Some(QuadratureEcho {
        nodes: artifacts.quadrature.nodes,
        tol: artifacts.quadrature.tol,
        max_delta_mean: fold(&|cell| cell.quad_delta_mean),
        max_delta_variance: fold(&|cell| cell.quad_delta_variance),
        all_converged: cells.iter().all(|cell| cell.quad_converged != Some(false)),
    })
}

fn manifest_json(artifacts: &RunArtifacts) -> Result<String> {
    let table = artifacts.table;
    let pick = |f: &dyn Fn(&legendre_uq::MomentRow) -> f64| -> Vec<Vec<f64>> {
        table
            .rows
            .iter()
            .map(|row| row.iter().map(|cell| f(cell)).collect())
            .collect()
    };
    let manifest = Manifest {
        config: artifacts.config,
        model: &artifacts.model_description,
        validation: artifacts.validation.into(),
        t_grid: &table.t_grid,
        orders: table.orders.iter().map(|order| order.get()).collect(),
        expectation: pick(&|cell| cell.mean),
        variance: pick(&|cell| cell.variance),
        variance_clamped: table
            .rows
            .iter()
            .map(|row| row.iter().map(|cell| cell.variance_clamped).collect())
            .collect(),
        quadrature: quadrature_summary(artifacts),
        stabilization: artifacts
            .stabilization
            .iter()
            .map(|report| StabilizationEcho {
                t: report.t,
                stabilized_at: report.stabilized_at,
                steps: report
                    .steps
                    .iter()
                    .map(|step| StepEcho {
                        from: step.from,
                        to: step.to,
                        mean_rel_change: step.mean_change,
                        variance_rel_change: step.variance_change,
                        within_tol: step.pass,
                    })
                    .collect(),
            })
            .collect(),
        mc: artifacts.mc.map(|mc| McEcho {
            sample_count: mc.sample_count,
            seed: mc.seed,
            generator: mc.generator,
            evaluator: &mc.evaluator,
            mean: mc.cells.iter().map(|cell| cell.mean).collect(),
            variance: mc.cells.iter().map(|cell| cell.variance).collect(),
            se_mean: mc.cells.iter().map(|cell| cell.se_mean).collect(),
            se_variance: mc.cells.iter().map(|cell| cell.se_variance).collect(),
        }),
        timings_ms: artifacts.timings,
    };
    let mut json = serde_json::to_string_pretty(&manifest).context("manifest serialization")?;
    json.push('\n');
    Ok(json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits_positional() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(-0.0), "0");
        assert_eq!(format_sig6(0.180166), "0.180166");
        assert_eq!(format_sig6(-2.01642), "-2.01642");
        assert_eq!(format_sig6(31.6324), "31.6324");
        assert_eq!(format_sig6(203.7), "203.7");
        assert_eq!(format_sig6(658630.0), "658630");
        assert_eq!(format_sig6(0.5), "0.5");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(100.0), "100");
        assert_eq!(format_sig6(0.0001), "0.0001");
        assert_eq!(format_sig6(0.00012345678), "0.000123457");
    }

    #[test]
    fn six_significant_digits_scientific() {
        assert_eq!(format_sig6(1e-5), "1e-5");
        assert_eq!(format_sig6(0.0000123456789), "1.23457e-5");
        assert_eq!(format_sig6(1_234_567.0), "1.23457e6");
        assert_eq!(format_sig6(-9.87654321e-12), "-9.87654e-12");
        assert_eq!(format_sig6(1e6), "1e6");
    }

    #[test]
    fn rounding_can_promote_the_exponent() {
        // 999999.5 rounds to 1e6, which no longer fits positional range.
        assert_eq!(format_sig6(999_999.5), "1e6");
        assert_eq!(format_sig6(999_999.4), "999999");
        assert_eq!(format_sig6(0.99999951), "1");
        assert_eq!(format_sig6(9.9999996e-5), "0.0001");
    }

    #[test]
    fn non_finite_values_print_debuggably() {
        assert_eq!(format_sig6(f64::NAN), "NaN");
        assert_eq!(format_sig6(f64::INFINITY), "inf");
        assert_eq!(format_sig6(f64::NEG_INFINITY), "-inf");
    }
}
