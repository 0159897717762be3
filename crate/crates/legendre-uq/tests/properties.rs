//! Randomized structural properties of the series representation, the
//! moment engine and the oracles. These never consult reference numbers:
//! each property is an internal identity that must hold for *every* input,
//! so proptest gets to hunt for counterexamples.

use proptest::prelude::*;

use legendre_uq::{
    coefficients, eval_truncated, mc_estimate, ode_solve, product_p1, product_p2,
    stabilization_check, Atom, Error, JointInputModel, MomentEngine, Realization,
    TruncationOrder,
};

fn order(m: usize) -> TruncationOrder {
    TruncationOrder::new(m)
}

/// A small normalized atom set: 1-5 atoms, strictly positive weights.
fn atom_sets() -> impl Strategy<Value = Vec<Atom>> {
    prop::collection::vec(
        (0.0..10.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.1..1.0f64),
        1..=5,
    )
    .prop_map(|raw| {
        let total: f64 = raw.iter().map(|r| r.3).sum();
        let mut atoms: Vec<Atom> = raw
            .iter()
            .map(|&(a, x0, x1, w)| Atom { a, x0, x1, p: w / total })
            .collect();
        // Pin the mass to exactly one; the last weight is > 0.05 of the
        // total, so the correction never drives it negative.
        let head: f64 = atoms[..atoms.len() - 1].iter().map(|at| at.p).sum();
        atoms.last_mut().expect("nonempty").p = 1.0 - head;
        atoms
    })
}

proptest! {
    /// Recurrence-filled coefficients equal the closed product form
    /// c_{2m} = (-1)^m P1(m)/(2m)!, c_{2m+1} = (-1)^m P2(m)/(2m+1)!.
    #[test]
    fn coefficients_match_direct_products(a in 0.0..20.0f64, m in 1usize..=40) {
        let seq = coefficients(a, order(2 * m + 1));
        let (mut fact_even, mut fact_odd) = (1.0f64, 1.0f64);
        for k in 1..=m {
            let two_k = 2.0 * k as f64;
            fact_even *= (two_k - 1.0) * two_k;
            fact_odd *= two_k * (two_k + 1.0);
        }
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let even = sign * product_p1(a, m).expect("in range") / fact_even;
        let odd = sign * product_p2(a, m).expect("in range") / fact_odd;
        let got_even = seq.even()[m];
        let got_odd = seq.odd()[m];
        prop_assert!(
            (got_even - even).abs() <= 1e-10 * even.abs().max(got_even.abs()),
            "even m = {m}: {got_even} vs {even}"
        );
        prop_assert!(
            (got_odd - odd).abs() <= 1e-10 * odd.abs().max(got_odd.abs()),
            "odd m = {m}: {got_odd} vs {odd}"
        );
    }

    /// The truncated series is linear in the initial conditions.
    #[test]
    fn evaluation_is_linear_in_the_initial_conditions(
        a in 0.0..30.0f64,
        x0 in -5.0..5.0f64,
        x1 in -5.0..5.0f64,
        t in -0.95..0.95f64,
    ) {
        let m = order(40);
        let combined = eval_truncated(&Realization::new(a, x0, x1).unwrap(), t, m).unwrap();
        let even_part = eval_truncated(&Realization::new(a, 1.0, 0.0).unwrap(), t, m).unwrap();
        let odd_part = eval_truncated(&Realization::new(a, 0.0, 1.0).unwrap(), t, m).unwrap();
        let recombined = x0 * even_part + x1 * odd_part;
        // Identical arithmetic up to multiplication order, so the two can
        // only drift apart by round-off on the final products.
        let scale = (x0 * even_part).abs() + (x1 * odd_part).abs();
        prop_assert!(
            (combined - recombined).abs() <= 1e-14 * scale.max(1e-300),
            "{combined} vs {recombined}"
        );
    }

    /// Flipping the sign of t is the same as flipping the sign of X1: the
    /// even part is a function of t^2 and the odd part is odd. This holds
    /// bit for bit, not just approximately.
    #[test]
    fn evaluation_parity_in_t_and_x1(
        a in 0.0..30.0f64,
        x0 in -5.0..5.0f64,
        x1 in -5.0..5.0f64,
        t in -0.95..0.95f64,
        m in 0usize..=60,
    ) {
        let mirrored_t = eval_truncated(&Realization::new(a, x0, x1).unwrap(), -t, order(m)).unwrap();
        let mirrored_x1 =
            eval_truncated(&Realization::new(a, x0, -x1).unwrap(), t, order(m)).unwrap();
        prop_assert!(
            mirrored_t == mirrored_x1,
            "X(-t) = {mirrored_t} but flipped-X1 X(t) = {mirrored_x1}"
        );
    }

    /// Evaluation points on or beyond the boundary are rejected, never
    /// silently extrapolated.
    #[test]
    fn out_of_domain_evaluation_is_rejected(
        a in 0.0..10.0f64,
        beyond in 0.0..10.0f64,
        negative in any::<bool>(),
    ) {
        let magnitude = 1.0 + beyond;
        let t = if negative { -magnitude } else { magnitude };
        let r = Realization::new(a, 1.0, 1.0).unwrap();
        let err = eval_truncated(&r, t, order(20)).unwrap_err();
        prop_assert!(matches!(err, Error::OutsideDomain { .. }), "got {err:?}");
    }

    /// For finite atom sets the cached-moment engine is exactly the
    /// weighted brute-force sum over per-atom evaluations.
    #[test]
    fn atom_models_match_brute_force_sums(
        atoms in atom_sets(),
        t in -0.9..0.9f64,
    ) {
        let m = order(30);
        let model = JointInputModel::from_atoms(atoms.clone()).unwrap();
        let engine = MomentEngine::new(&model, m).unwrap();

        let (mut mean, mut second) = (0.0f64, 0.0f64);
        for atom in &atoms {
            let r = Realization::new(atom.a, atom.x0, atom.x1).unwrap();
            let x = eval_truncated(&r, t, m).unwrap();
            mean += atom.p * x;
            second += atom.p * x * x;
        }
        let variance = (second - mean * mean).max(0.0);

        // The engine sums the same quantities through its pair-moment cache,
        // whose intermediates (coefficient products) can be orders of
        // magnitude larger than the final moment; the comparison tolerance
        // has to budget for that round-off, scaled by the second moment.
        let engine_mean = engine.expectation(t, m).unwrap();
        let engine_var = engine.variance(t, m).unwrap();
        let scale = second.abs().max(1.0);
        prop_assert!(
            (engine_mean - mean).abs() <= 1e-9 * scale,
            "mean {engine_mean} vs {mean}"
        );
        prop_assert!(
            (engine_var - variance).abs() <= 1e-9 * scale,
            "variance {engine_var} vs {variance}"
        );
    }

    /// Monte Carlo over a single atom degenerates to that atom's
    /// deterministic trajectory. Every sample is the same float, but the
    /// sequential sum over 50 copies still rounds, so the mean lands within
    /// a few ulp of the trajectory value rather than bitwise on it, and the
    /// spread statistics are squared-ulp dust rather than exact zeros.
    #[test]
    fn single_atom_mc_collapses_to_the_trajectory(
        a in 0.0..8.0f64,
        x0 in -2.0..2.0f64,
        x1 in -2.0..2.0f64,
        seed in any::<u64>(),
    ) {
        let model = JointInputModel::from_atoms(vec![Atom { a, x0, x1, p: 1.0 }]).unwrap();
        let report = mc_estimate(&model, &[0.0, 0.6], 50, order(60), seed).unwrap();
        let expected = eval_truncated(&Realization::new(a, x0, x1).unwrap(), 0.6, order(60)).unwrap();
        for (cell, v) in report.cells.iter().zip([x0, expected]) {
            prop_assert!(
                (cell.mean - v).abs() <= 1e-13 * v.abs() + 1e-300,
                "mean {} vs trajectory {v} at t={}", cell.mean, cell.t
            );
            prop_assert!(cell.variance <= 1e-27 * v * v + 1e-300, "variance {}", cell.variance);
            prop_assert!(cell.se_mean <= 1e-14 * v.abs() + 1e-300, "se_mean {}", cell.se_mean);
            prop_assert!(cell.se_variance <= 1e-27 * v * v + 1e-300, "se_variance {}", cell.se_variance);
        }
    }
}

proptest! {
    // The integrator is the costly oracle here; fewer cases keep the suite
    // inside its time budget while still roaming the input space.
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Adaptive Runge-Kutta integration of the original equation agrees
    /// with a deep series truncation on random realizations.
    #[test]
    fn ode_integration_agrees_with_the_series(
        a in 0.0..12.0f64,
        x0 in -2.0..2.0f64,
        x1 in -2.0..2.0f64,
        t in -0.88..0.88f64,
    ) {
        let r = Realization::new(a, x0, x1).unwrap();
        let series = eval_truncated(&r, t, order(250)).unwrap();
        let ode = ode_solve(&r, t, 1e-8).unwrap();
        prop_assert!(
            (series - ode).abs() <= 1e-6 * series.abs().max(1.0),
            "series {series} vs ode {ode}"
        );
    }

    /// Loosening the tolerance can only move the certified order earlier
    /// (or keep it); it can never take certification away.
    #[test]
    fn stabilization_is_monotone_in_the_tolerance(
        atoms in atom_sets(),
        t in -0.9..0.9f64,
        tol in 1e-9..1e-2f64,
        factor in 1.0..1e4f64,
    ) {
        let model = JointInputModel::from_atoms(atoms).unwrap();
        let schedule = [5usize, 10, 20, 40];
        let tight = stabilization_check(&model, t, &schedule, tol).unwrap();
        let loose = stabilization_check(&model, t, &schedule, tol * factor).unwrap();

        prop_assert_eq!(tight.steps.len(), schedule.len() - 1);
        for report in [&tight, &loose] {
            if let Some(at) = report.stabilized_at {
                // The certified order is a schedule entry with a recorded
                // step, so never the last entry.
                prop_assert!(schedule[..schedule.len() - 1].contains(&at));
            }
        }
        if let Some(tight_at) = tight.stabilized_at {
            let loose_at = loose.stabilized_at;
            prop_assert!(
                loose_at.is_some_and(|l| l <= tight_at),
                "tol {tol} certified M{tight_at} but tol {} gave {loose_at:?}",
                tol * factor
            );
        }
    }

    /// Sampling is a pure function of the seed.
    #[test]
    fn sampling_is_seed_deterministic(seed in any::<u64>()) {
        let model = JointInputModel::dirichlet([5.0, 1.0, 2.0, 3.0]).unwrap();
        let first = model.sample(64, seed).unwrap();
        let second = model.sample(64, seed).unwrap();
        for (a, b) in first.realizations.iter().zip(&second.realizations) {
            prop_assert_eq!(a.a().to_bits(), b.a().to_bits());
            prop_assert_eq!(a.x0().to_bits(), b.x0().to_bits());
            prop_assert_eq!(a.x1().to_bits(), b.x1().to_bits());
        }
    }
}

/// Degree bookkeeping: a degree-M truncation holds exactly M + 1
/// coefficients across the two parities, and adding one degree extends
/// exactly one parity.
#[test]
fn truncation_order_coefficient_counts() {
    for m in 0..=200usize {
        let seq = coefficients(1.5, order(m));
        assert_eq!(seq.even().len() + seq.odd().len(), m + 1, "M = {m}");
        if m > 0 {
            let prev = coefficients(1.5, order(m - 1));
            let grew_even = seq.even().len() - prev.even().len();
            let grew_odd = seq.odd().len() - prev.odd().len();
            assert_eq!(grew_even + grew_odd, 1, "M = {m}");
        }
    }
}
