//! Backward splitting of a node target into two sub-targets coupled on a
//! zero-herald beam splitter.
//!
//! With `B(θ)` and the second port projected on vacuum, the output
//! polynomial is `P_a(cosθ z)·P_b(−sinθ z)`. Any partition of the target's
//! roots into two groups therefore gives an exact split for every `θ`:
//! group A scaled by `cosθ` and group B by `−sinθ`. These splits seed the
//! optimizer, which then maximizes fidelity over free amplitudes.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::roots::{fock_to_poly, poly_from_roots, poly_to_fock, roots};
use crate::error::{Error, Result};
use crate::fock::{couple_zero_raw, fidelity, normalize, FockVector};
use crate::optimize::{maximize_from, Bound, OptTrace, OptimizerConfig};

/// Root partitions examined before falling back to random sampling.
const MAX_PARTITIONS: usize = 2000;
/// Points of the coarse `θ` scan over `[−π/2, π/2]`.
const THETA_SCAN: usize = 129;
/// Candidates within this fidelity of the best are ranked by probability.
pub(crate) const FIDELITY_TIE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub split: (usize, usize),
    pub sub_a: FockVector,
    pub sub_b: FockVector,
    pub theta: f64,
    /// Fidelity of the coupled sub-targets with the node target.
    pub fidelity: f64,
    /// Zero-herald probability for the normalized sub-targets.
    pub probability: f64,
    pub partitions: usize,
    pub trace: OptTrace,
}

/// Normalized output and probability of coupling `a` and `b` on `B(θ)`
/// with the second port on vacuum; `None` if the output vanishes.
fn coupled(a: &[Complex64], b: &[Complex64], theta: f64) -> Option<(FockVector, f64)> {
    let raw = FockVector::from_raw(couple_zero_raw(a, b, theta));
    let p = raw.norm_sqr();
    (p > 1e-300 && p.is_finite()).then_some((raw, p))
}

fn unit(v: Vec<Complex64>) -> Option<Vec<Complex64>> {
    normalize(&FockVector::from_raw(v)).ok().map(|(u, _)| u.into_amplitudes())
}

/// `(sub_a, sub_b)` as normalized amplitude vectors from a packed
/// parameter vector `[θ, Re a_0, Im a_0, ..., Re b_0, Im b_0, ...]`.
fn unpack(x: &[f64], n_a: usize, n_b: usize) -> Option<(Vec<Complex64>, Vec<Complex64>)> {
    let read = |from: usize, n: usize| (0..=n).map(|i| Complex64::new(x[from + 2 * i], x[from + 2 * i + 1])).collect();
    let a = unit(read(1, n_a))?;
    let b = unit(read(1 + 2 * (n_a + 1), n_b))?;
    Some((a, b))
}

fn pack(theta: f64, a: &[Complex64], b: &[Complex64]) -> Vec<f64> {
    std::iter::once(theta)
        .chain(a.iter().chain(b).flat_map(|c| [c.re, c.im]))
        .collect()
}

/// `(fidelity, probability)` of a packed parameter vector.
fn score(x: &[f64], n_a: usize, n_b: usize, target: &FockVector) -> (f64, f64) {
    match unpack(x, n_a, n_b).and_then(|(a, b)| coupled(&a, &b, x[0])) {
        Some((out, p)) => (fidelity(&out, target), p),
        None => (0.0, 0.0),
    }
}

/// Sub-targets of a root partition at angle `θ`, padded to the budgets.
fn partition_states(
    group_a: &[Complex64],
    group_b: &[Complex64],
    theta: f64,
    n_a: usize,
    n_b: usize,
) -> Option<(Vec<Complex64>, Vec<Complex64>)> {
    let (c, s) = (theta.cos(), theta.sin());
    let build = |group: &[Complex64], scale: f64, n: usize| {
        let scaled: Vec<Complex64> = group.iter().map(|r| r * scale).collect();
        let mut amps = poly_to_fock(&poly_from_roots(&scaled)).into_amplitudes();
        amps.resize(n + 1, Complex64::new(0.0, 0.0));
        unit(amps)
    };
    Some((build(group_a, c, n_a)?, build(group_b, -s, n_b)?))
}

fn partition_probability(group_a: &[Complex64], group_b: &[Complex64], theta: f64, n_a: usize, n_b: usize) -> f64 {
    partition_states(group_a, group_b, theta, n_a, n_b)
        .and_then(|(a, b)| coupled(&a, &b, theta))
        .map_or(0.0, |(_, p)| p)
}

/// Angle maximizing the zero-herald probability of a partition: a grid
/// scan followed by golden-section refinement. Ties prefer smaller `|θ|`,
/// then positive `θ`.
fn best_angle(group_a: &[Complex64], group_b: &[Complex64], n_a: usize, n_b: usize) -> (f64, f64) {
    let f = |t: f64| partition_probability(group_a, group_b, t, n_a, n_b);
    let step = 2.0 * FRAC_PI_2 / (THETA_SCAN - 1) as f64;
    let mut best: (f64, f64) = (0.0, f(0.0));
    for i in 0..THETA_SCAN {
        let t = -FRAC_PI_2 + i as f64 * step;
        let p = f(t);
        let better = p > best.1 * (1.0 + 1e-12)
            || (p >= best.1 * (1.0 - 1e-12) && (t.abs() < best.0.abs() - 1e-15 || (t.abs() <= best.0.abs() + 1e-15 && t > best.0)));
        if better && p > 0.0 {
            best = (t, p);
        }
    }
    if best.1 <= 0.0 {
        return best;
    }
    let (mut lo, mut hi) = ((best.0 - step).max(-FRAC_PI_2), (best.0 + step).min(FRAC_PI_2));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    let t = 0.5 * (lo + hi);
    let p = f(t);
    if p > best.1 * (1.0 + 1e-12) {
        (t, p)
    } else {
        best
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Index sets of size `k` over `0..n` in lexicographic order.
fn combinations(n: usize, k: usize, limit: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        if out.len() >= limit {
            return out;
        }
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Root partitions `(group_a, group_b)` compatible with the budgets.
fn partitions(rts: &[Complex64], n_a: usize, n_b: usize, seed: u64) -> Vec<(Vec<Complex64>, Vec<Complex64>)> {
    let k = rts.len();
    let sizes: Vec<usize> = (k.saturating_sub(n_b)..=k.min(n_a)).collect();
    let total: u128 = sizes.iter().map(|&ka| binomial(k, ka)).sum();
    let split = |chosen: &[usize]| {
        let mut in_a = vec![false; k];
        for &i in chosen {
            in_a[i] = true;
        }
        let a = (0..k).filter(|&i| in_a[i]).map(|i| rts[i]).collect();
        let b = (0..k).filter(|&i| !in_a[i]).map(|i| rts[i]).collect();
        (a, b)
    };
    if total <= MAX_PARTITIONS as u128 {
        return sizes
            .iter()
            .flat_map(|&ka| combinations(k, ka, MAX_PARTITIONS))
            .map(|c| split(&c))
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..MAX_PARTITIONS)
        .map(|i| {
            let ka = sizes[i % sizes.len()];
            let mut chosen = sample(&mut rng, k, ka).into_vec();
            chosen.sort_unstable();
            split(&chosen)
        })
        .collect()
}

/// Splits `target` (budget `n_a + n_b`) into sub-targets with cutoffs
/// `n_a` and `n_b` and a coupling angle.
///
/// Returns [`Error::Split`] carrying the best outcome if its fidelity is
/// below `floor`.
pub fn split_target(
    target: &FockVector,
    split: (usize, usize),
    opt: &OptimizerConfig,
    seeds: usize,
    floor: f64,
) -> Result<SplitOutcome> {
    let (n_a, n_b) = split;
    let n = n_a + n_b;
    if target.effective_degree(1e-12) > n {
        return Err(Error::Contract(format!(
            "target has support up to {} photons, beyond the split budget {n}",
            target.effective_degree(1e-12)
        )));
    }
    let (target, _) = normalize(&target.truncated(n))?;

    let degree = target.effective_degree(1e-12);
    let poly = fock_to_poly(&target);
    let rts = roots(&poly[..=degree]);
    let mut ranked: Vec<(f64, f64, Vec<f64>)> = partitions(&rts, n_a, n_b, opt.seed)
        .iter()
        .filter_map(|(ga, gb)| {
            let (theta, p) = best_angle(ga, gb, n_a, n_b);
            let (a, b) = partition_states(ga, gb, theta, n_a, n_b)?;
            (p > 0.0).then(|| (p, theta, pack(theta, &a, &b)))
        })
        .collect();
    let partitions_tried = ranked.len();
    ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.abs().total_cmp(&y.1.abs())));
    let starts: Vec<Vec<f64>> = ranked.into_iter().take(seeds.min(opt.restarts)).map(|r| r.2).collect();

    let mut bounds = vec![Bound::new(-FRAC_PI_2, FRAC_PI_2)];
    bounds.extend(std::iter::repeat_n(Bound::new(-1.0, 1.0), 2 * (n + 2)));
    let config = opt.with_bounds(bounds);
    let objective = |x: &[f64]| score(x, n_a, n_b, &target).0;
    let optimum = maximize_from(objective, &config, &starts)?;

    let candidates = starts.iter().chain(optimum.trace.restarts.iter().map(|r| &r.best_params));
    let best = pick(candidates.map(|x| {
        let (f, p) = score(x, n_a, n_b, &target);
        (f, p, x.clone())
    }))
    .ok_or_else(|| Error::Degenerate("no split candidate produced an output".into()))?;

    let (a, b) = unpack(&best.2, n_a, n_b).ok_or_else(|| Error::Degenerate("split produced a zero sub-target".into()))?;
    let outcome = SplitOutcome {
        split,
        sub_a: FockVector::normalized(a)?,
        sub_b: FockVector::normalized(b)?,
        theta: best.2[0],
        fidelity: best.0,
        probability: best.1,
        partitions: partitions_tried,
        trace: optimum.trace,
    };
    if outcome.fidelity < floor {
        return Err(Error::Split {
            node: String::new(),
            fidelity: outcome.fidelity,
            floor,
            best: Box::new(outcome),
        });
    }
    Ok(outcome)
}

/// Highest fidelity, then highest probability among candidates within
/// [`FIDELITY_TIE`] of it. Earlier candidates win ties in probability.
pub(crate) fn pick<T>(candidates: impl Iterator<Item = (f64, f64, T)>) -> Option<(f64, f64, T)> {
    let all: Vec<(f64, f64, T)> = candidates.collect();
    let top = all.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<(f64, f64, T)> = None;
    for c in all {
        if c.0 < top - FIDELITY_TIE {
            continue;
        }
        if best.as_ref().is_none_or(|b| c.1 > b.1 * (1.0 + 1e-9)) {
            best = Some(c);
        }
    }
    best
}
