//! Gauss-Legendre quadrature rules.
//!
//! Nodes are roots of the degree-n Legendre polynomial, found by Newton
//! iteration from the Chebyshev-like initial guesses; the classic recipe.
//! An n-point rule integrates polynomials up to degree 2n - 1 exactly, which
//! is what makes node-doubling a meaningful convergence check for the smooth
//! integrands in this crate.

/// Nodes and weights on the canonical interval [-1, 1], nodes ascending.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a quadrature rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    // Roots come in +/- pairs; compute the upper half and mirror.
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, z);
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        // Odd rules have a root exactly at the origin; snap the rounding dust.
        if z.abs() < 1e-14 {
            z = 0.0;
        }
        // Weight from the derivative at the converged root, not the last
        // Newton iterate.
        let (_, dp) = legendre_and_derivative(n, z);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// P_n(z) and P_n'(z) by the three-term recurrence.
fn legendre_and_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p = 1.0;
    let mut p_prev = 0.0;
    for j in 0..n {
        let jf = j as f64;
        let p_next = ((2.0 * jf + 1.0) * z * p - jf * p_prev) / (jf + 1.0);
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (z * p - p_prev) / (z * z - 1.0);
    (p, dp)
}

/// The same rule mapped onto [lo, hi].
pub(crate) fn gauss_legendre_on(n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    debug_assert!(lo < hi);
    let (mut nodes, mut weights) = gauss_legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    for x in &mut nodes {
        *x = mid + half * *x;
    }
    for w in &mut weights {
        *w *= half;
    }
    (nodes, weights)
}
