//! Bargmann polynomials of truncated Fock vectors and their roots.
//!
//! A vector `Σ c_n |n⟩` corresponds to `P(z) = Σ c_n zⁿ/√n!`. Zero-herald
//! beam-splitter coupling multiplies these polynomials after rescaling the
//! argument, which is what makes root partitions useful for splitting.

use num_complex::Complex64;

use crate::fock::{ln_factorial, FockVector};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coefficients `c_n/√n!`.
pub fn fock_to_poly(v: &FockVector) -> Vec<Complex64> {
    v.amplitudes()
        .iter()
        .enumerate()
        .map(|(n, c)| c * (-0.5 * ln_factorial(n)).exp())
        .collect()
}

/// Amplitudes `√n!·p_n` (unnormalized).
pub fn poly_to_fock(p: &[Complex64]) -> FockVector {
    FockVector::from_raw(
        p.iter()
            .enumerate()
            .map(|(n, c)| c * (0.5 * ln_factorial(n)).exp())
            .collect(),
    )
}

/// Monic polynomial with the given roots, lowest order first.
pub fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![ZERO; p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= r * c;
        }
        p = next;
    }
    p
}

/// `P(z)` and `P'(z)` by Horner's rule.
pub fn eval_with_derivative(p: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut val = ZERO;
    let mut der = ZERO;
    for &c in p.iter().rev() {
        der = der * z + val;
        val = val * z + c;
    }
    (val, der)
}

/// Degree after dropping leading coefficients below `rel_tol · max|c|`.
pub fn effective_degree(p: &[Complex64], rel_tol: f64) -> usize {
    let max = p.iter().map(|c| c.norm()).fold(0.0, f64::max);
    p.iter().rposition(|c| c.norm() > rel_tol * max).unwrap_or(0)
}

/// All roots of `p` (trailing coefficients below `1e-13` relative are
/// treated as zero), by Aberth–Ehrlich iteration followed by Newton
/// polishing.
pub fn roots(p: &[Complex64]) -> Vec<Complex64> {
    let deg = effective_degree(p, 1e-13);
    if deg == 0 {
        return Vec::new();
    }
    let p = &p[..=deg];
    let max = p.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let zeros_at_origin = p.iter().position(|c| c.norm() > 1e-13 * max).unwrap_or(0);
    let q = &p[zeros_at_origin..];
    let k = q.len() - 1;
    let mut out = vec![ZERO; zeros_at_origin];
    if k == 0 {
        return out;
    }

    // Initial guesses on a circle sized by the geometric mean of the roots.
    let lead = q[k];
    let radius = (q[0] / lead).norm().powf(1.0 / k as f64).max(1e-3);
    let mut z: Vec<Complex64> = (0..k)
        .map(|i| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * (i as f64 + 0.25) / k as f64))
        .collect();
    for _ in 0..500 {
        let mut biggest: f64 = 0.0;
        for i in 0..k {
            let (val, der) = eval_with_derivative(q, z[i]);
            if val == ZERO {
                continue;
            }
            let ratio = val / der;
            let repulsion: Complex64 = (0..k)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i] - z[j];
                    if d == ZERO {
                        ZERO
                    } else {
                        1.0 / d
                    }
                })
                .sum();
            let step = ratio / (1.0 - ratio * repulsion);
            if step.is_finite() {
                z[i] -= step;
                biggest = biggest.max(step.norm() / (1.0 + z[i].norm()));
            }
        }
        if biggest < 1e-15 {
            break;
        }
    }
    for r in z.iter_mut() {
        for _ in 0..3 {
            let (val, der) = eval_with_derivative(q, *r);
            if der == ZERO {
                break;
            }
            let step = val / der;
            if !step.is_finite() {
                break;
            }
            *r -= step;
        }
    }
    out.extend(z);
    out
}
