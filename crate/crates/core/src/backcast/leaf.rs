//! First-layer circuits: parameterization, exact realization of a Bargmann
//! form, and the fit of a leaf circuit to its sub-target.
//!
//! A leaf on `l` modes squeezes and displaces every input, mixes them in a
//! triangular beam-splitter mesh, rotates mode 0 and heralds modes `1..l`.
//!
//! Seeds come from "star" forms: mode 0 couples only to each herald mode
//! (`B = [[0, x], [x, diag p]]`, `γ = (0, u)`). Heralding mode `i` on `m_i`
//! photons then multiplies the output polynomial by the `w^{m_i}`
//! coefficient of `exp(w(x_i z + u_i) + ½ p_i w²)`, so for `m_i ≤ 2` any
//! pair of roots can be placed exactly and the remaining freedom (the
//! couplings `x_i`) is spent on the herald probability.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::roots::{fock_to_poly, roots};
use super::split::pick;
use crate::error::{Error, Result};
use crate::fock::{fidelity, normalize, FockVector};
use crate::gaussian::{heralded_state, Circuit, CircuitOp, DetectionPattern};
use crate::hafnian::SymmetricComplexMatrix;
use crate::optimize::{maximize, maximize_from, Bound, OptTrace, OptimizerConfig};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshElement {
    pub modes: [usize; 2],
    pub theta: f64,
    pub phi: f64,
}

/// Parameters of an `l`-mode first-layer circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// `[r, φ]` per input.
    pub squeeze: Vec<[f64; 2]>,
    /// `[Re α, Im α]` per input, applied after the squeezer.
    pub displacement: Vec<[f64; 2]>,
    /// Beam splitters in application order.
    pub mesh: Vec<MeshElement>,
    /// Rotation of the output mode after the mesh.
    pub output_phase: f64,
}

/// Beam-splitter pairs of the triangular mesh in application order.
pub fn mesh_pairs(l: usize) -> Vec<[usize; 2]> {
    let mut elimination = Vec::new();
    for j in 0..l.saturating_sub(1) {
        for i in (j + 1..l).rev() {
            elimination.push([i - 1, i]);
        }
    }
    elimination.reverse();
    elimination
}

/// Optimizer-facing limits on leaf parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafLimits {
    pub r_max: f64,
    pub alpha_max: f64,
}

impl Default for LeafLimits {
    fn default() -> Self {
        Self {
            r_max: 2.0,
            alpha_max: 3.0,
        }
    }
}

impl CircuitParams {
    /// All gates off.
    pub fn identity(l: usize) -> Self {
        Self {
            squeeze: vec![[0.0, 0.0]; l],
            displacement: vec![[0.0, 0.0]; l],
            mesh: mesh_pairs(l)
                .into_iter()
                .map(|modes| MeshElement { modes, theta: 0.0, phi: 0.0 })
                .collect(),
            output_phase: 0.0,
        }
    }

    pub fn modes(&self) -> usize {
        self.squeeze.len()
    }

    pub fn circuit(&self) -> Circuit {
        let mut c = Circuit::new(self.modes());
        for (i, (s, d)) in self.squeeze.iter().zip(&self.displacement).enumerate() {
            c.push(CircuitOp::squeeze(i, s[0], s[1]));
            c.push(CircuitOp::displace(i, Complex64::new(d[0], d[1])));
        }
        for m in &self.mesh {
            c.push(CircuitOp::beamsplitter(m.modes[0], m.modes[1], m.theta, m.phi));
        }
        c.push(CircuitOp::phase(0, self.output_phase));
        c
    }

    /// Packs `[r, φ, Re α, Im α]` per mode, `[θ, φ]` per mesh element and
    /// the output phase.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (s, d) in self.squeeze.iter().zip(&self.displacement) {
            v.extend_from_slice(&[s[0], s[1], d[0], d[1]]);
        }
        for m in &self.mesh {
            v.extend_from_slice(&[m.theta, m.phi]);
        }
        v.push(self.output_phase);
        v
    }

    pub fn from_vector(l: usize, v: &[f64]) -> Result<Self> {
        let pairs = mesh_pairs(l);
        let want = 4 * l + 2 * pairs.len() + 1;
        if v.len() != want {
            return Err(Error::Contract(format!("{l}-mode circuit needs {want} parameters, got {}", v.len())));
        }
        Ok(Self {
            squeeze: (0..l).map(|i| [v[4 * i], v[4 * i + 1]]).collect(),
            displacement: (0..l).map(|i| [v[4 * i + 2], v[4 * i + 3]]).collect(),
            mesh: pairs
                .into_iter()
                .enumerate()
                .map(|(k, modes)| MeshElement {
                    modes,
                    theta: v[4 * l + 2 * k],
                    phi: v[4 * l + 2 * k + 1],
                })
                .collect(),
            output_phase: v[want - 1],
        })
    }

    pub fn bounds(l: usize, limits: &LeafLimits) -> Vec<Bound> {
        let mut b = Vec::new();
        for _ in 0..l {
            b.push(Bound::new(-limits.r_max, limits.r_max));
            b.push(Bound::periodic(-PI, PI));
            b.push(Bound::new(-limits.alpha_max, limits.alpha_max));
            b.push(Bound::new(-limits.alpha_max, limits.alpha_max));
        }
        for _ in mesh_pairs(l) {
            b.push(Bound::new(-FRAC_PI_2, FRAC_PI_2));
            b.push(Bound::periodic(-PI, PI));
        }
        b.push(Bound::periodic(-PI, PI));
        b
    }

    /// Whether every parameter lies within `limits`.
    pub fn within(&self, limits: &LeafLimits) -> bool {
        self.squeeze.iter().all(|s| s[0].abs() <= limits.r_max)
            && self
                .displacement
                .iter()
                .all(|d| d[0].abs() <= limits.alpha_max && d[1].abs() <= limits.alpha_max)
    }
}

/// Output state (at least `d` photons) and herald probability of a leaf.
pub fn leaf_output(params: &CircuitParams, herald: &[usize], d: usize) -> Result<(FockVector, f64)> {
    let l = params.modes();
    if herald.len() + 1 != l {
        return Err(Error::Contract(format!("{l}-mode leaf needs {} herald counts, got {}", l - 1, herald.len())));
    }
    let st = params.circuit().run()?;
    let pattern = DetectionPattern::new((1..l).collect(), herald.to_vec())?;
    heralded_state(&st, &pattern, 0, d)
}

fn to_dense(b: &SymmetricComplexMatrix) -> DMatrix<Complex64> {
    let l = b.dim();
    DMatrix::from_fn(l, l, |i, j| b.get(i, j))
}

/// Takagi factorization `B = U diag(λ) Uᵀ`, `U` unitary, `λ ≥ 0`.
fn takagi(b: &DMatrix<Complex64>) -> (DMatrix<Complex64>, Vec<f64>) {
    let l = b.nrows();
    // [[Re B, Im B], [Im B, −Re B]] has eigenpairs ±λ with [x; y] ↔ u = x + iy.
    let m = DMatrix::from_fn(2 * l, 2 * l, |i, j| {
        let e = b[(i % l, j % l)];
        match (i < l, j < l) {
            (true, true) => e.re,
            (false, false) => -e.re,
            _ => e.im,
        }
    });
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..2 * l).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut cols: Vec<DVector<Complex64>> = Vec::new();
    let mut lambdas = Vec::new();
    for &k in order.iter().take(l) {
        let s = eig.eigenvalues[k];
        if s <= 1e-12 * scale {
            break;
        }
        let v = eig.eigenvectors.column(k);
        let u = DVector::from_fn(l, |i, _| Complex64::new(v[i], v[i + l]));
        cols.push(u.normalize());
        lambdas.push(s);
    }
    // Complete with an orthonormal basis of the complement.
    for e in 0..l {
        if cols.len() == l {
            break;
        }
        let mut v = DVector::from_fn(l, |i, _| if i == e { Complex64::new(1.0, 0.0) } else { ZERO });
        for c in &cols {
            let proj = c.dotc(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / Complex64::new(norm, 0.0));
            lambdas.push(0.0);
        }
    }
    (DMatrix::from_columns(&cols), lambdas)
}

/// Beam-splitter angles with `W = G_1 ⋯ G_K D`, `D` diagonal, where `G_k`
/// is the Heisenberg matrix of the `k`-th element of the elimination order.
fn eliminate(w: &DMatrix<Complex64>) -> (Vec<MeshElement>, Vec<Complex64>) {
    let l = w.nrows();
    let mut a = w.clone();
    let mut gates = Vec::new();
    for j in 0..l.saturating_sub(1) {
        for i in (j + 1..l).rev() {
            let (ra, rb) = (i - 1, i);
            let (x, y) = (a[(ra, j)], a[(rb, j)]);
            let (theta, phi) = if y.norm() == 0.0 {
                (0.0, 0.0)
            } else {
                (y.norm().atan2(x.norm()), y.arg() - if x.norm() > 0.0 { x.arg() } else { 0.0 })
            };
            let (c, s) = (theta.cos(), theta.sin());
            let e = Complex64::from_polar(1.0, phi);
            // Apply G† = [[c, e^{−iφ} s], [−e^{iφ} s, c]] to rows (ra, rb).
            for col in 0..l {
                let (p, q) = (a[(ra, col)], a[(rb, col)]);
                a[(ra, col)] = p * c + e.conj() * s * q;
                a[(rb, col)] = -e * s * p + q * c;
            }
            gates.push(MeshElement {
                modes: [ra, rb],
                theta,
                phi,
            });
        }
    }
    gates.reverse();
    (gates, (0..l).map(|i| a[(i, i)]).collect())
}

/// Circuit parameters whose state has Bargmann matrix `B` and linear term
/// `γ` (up to the global phase).
pub fn realize(b: &SymmetricComplexMatrix, gamma: &[Complex64]) -> Result<CircuitParams> {
    let l = b.dim();
    if gamma.len() != l {
        return Err(Error::Contract(format!("γ has {} entries for {l} modes", gamma.len())));
    }
    let bd = to_dense(b);
    let (u, lambda) = takagi(&bd);
    if let Some(bad) = lambda.iter().find(|&&x| x >= 1.0) {
        return Err(Error::Validity(format!("Takagi value {bad} ≥ 1 is not a physical state")));
    }
    let (mesh, diag) = eliminate(&u);
    let squeeze = lambda
        .iter()
        .zip(&diag)
        .map(|(&lam, &d)| [lam.atanh(), if lam > 0.0 { (-(d * d)).arg() } else { 0.0 }])
        .collect();

    // γ = δ − B δ̄ as a real system in (Re δ, Im δ).
    let (re, im) = (bd.map(|c| c.re), bd.map(|c| c.im));
    let mut sys = DMatrix::<f64>::zeros(2 * l, 2 * l);
    let id = DMatrix::<f64>::identity(l, l);
    sys.view_mut((0, 0), (l, l)).copy_from(&(&id - &re));
    sys.view_mut((0, l), (l, l)).copy_from(&(-&im));
    sys.view_mut((l, 0), (l, l)).copy_from(&(-&im));
    sys.view_mut((l, l), (l, l)).copy_from(&(&id + &re));
    let rhs = DVector::from_fn(2 * l, |i, _| if i < l { gamma[i].re } else { gamma[i - l].im });
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Validity("displacement system is singular".into()))?;
    let delta = DVector::from_fn(l, |i, _| Complex64::new(sol[i], sol[i + l]));

    // The mesh maps input displacements α to δ = M α, with M = W D†.
    let mut m = u.clone();
    for (j, d) in diag.iter().enumerate() {
        for i in 0..l {
            m[(i, j)] *= d.conj();
        }
    }
    let alpha = m.adjoint() * delta;
    Ok(CircuitParams {
        squeeze,
        displacement: alpha.iter().map(|a| [a.re, a.im]).collect(),
        mesh,
        output_phase: 0.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafOutcome {
    pub herald: Vec<usize>,
    pub params: CircuitParams,
    /// Fidelity of the heralded output (including its tail) with the
    /// sub-target.
    pub fidelity: f64,
    pub probability: f64,
    /// Star seeds handed to the optimizer.
    pub seeds: usize,
    pub trace: OptTrace,
}

/// Settings of [`solve_first_layer`] beyond the optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSettings {
    pub limits: LeafLimits,
    /// Extra photon numbers computed past the cutoff.
    pub guard: usize,
    /// Star seeds passed to the optimizer.
    pub seeds: usize,
    pub floor: f64,
}

impl Default for LeafSettings {
    fn default() -> Self {
        Self {
            limits: LeafLimits::default(),
            guard: 4,
            seeds: 8,
            floor: 0.99,
        }
    }
}

/// How one herald mode contributes to a star seed.
#[derive(Clone, Debug)]
enum Slot {
    /// No roots: a decoupled vacuum (`m = 0`), coherent (`m = 1`) or
    /// squeezed (`m = 2`) mode with one free magnitude.
    Decoupled { m: usize },
    /// `m` roots placed exactly; one free coupling.
    Roots(Vec<Complex64>),
}

/// Star `(B, γ)` for the slots and free parameters (one per slot, plus
/// one for single-root slots).
fn star_form(slots: &[Slot], free: &[f64]) -> (SymmetricComplexMatrix, Vec<Complex64>) {
    let l = slots.len() + 1;
    let mut entries = vec![ZERO; l * l];
    let mut gamma = vec![ZERO; l];
    let mut k = 0;
    for (i, slot) in slots.iter().enumerate() {
        let mode = i + 1;
        let (x, u, p) = match slot {
            Slot::Decoupled { m: 0 } => (0.0, ZERO, ZERO),
            Slot::Decoupled { m: 1 } => (0.0, Complex64::new(free[k], 0.0), ZERO),
            Slot::Decoupled { .. } => (0.0, ZERO, Complex64::new(free[k], 0.0)),
            Slot::Roots(r) if r.len() == 1 => {
                let x = 10f64.powf(free[k]);
                k += 1;
                (x, -x * r[0], Complex64::new(free[k], 0.0))
            }
            Slot::Roots(r) => {
                let x = 10f64.powf(free[k]);
                let half = 0.5 * (r[0] - r[1]);
                (x, -x * 0.5 * (r[0] + r[1]), -(x * x) * half * half)
            }
        };
        k += 1;
        entries[mode] = Complex64::new(x, 0.0);
        entries[mode * l] = Complex64::new(x, 0.0);
        entries[mode * l + mode] = p;
        gamma[mode] = u;
    }
    (SymmetricComplexMatrix::new(l, entries).expect("symmetric by construction"), gamma)
}

fn star_bounds(slots: &[Slot], limits: &LeafLimits) -> Vec<Bound> {
    let p_max = limits.r_max.tanh();
    slots
        .iter()
        .flat_map(|s| match s {
            Slot::Decoupled { m: 1 } => vec![Bound::new(0.0, limits.alpha_max)],
            Slot::Decoupled { .. } => vec![Bound::new(-p_max, p_max)],
            Slot::Roots(r) if r.len() == 1 => vec![Bound::new(-3.0, 1.0), Bound::new(-p_max, p_max)],
            Slot::Roots(_) => vec![Bound::new(-3.0, 1.0)],
        })
        .collect()
}

/// Ways of distributing `rts` over herald modes with counts `herald`
/// (each at most 2), capped at `limit` assignments.
fn assignments(rts: &[Complex64], herald: &[usize], limit: usize) -> Vec<Vec<Slot>> {
    let k = rts.len();
    let far = 30.0 * (1.0 + rts.iter().map(|r| r.norm()).fold(0.0, f64::max));
    let mut out = Vec::new();
    // Roots taken by each mode: 0 or m_i, or 1 of 2 with a distant partner.
    fn counts(herald: &[usize], need: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if acc.len() == herald.len() {
            if need == 0 {
                out.push(acc.clone());
            }
            return;
        }
        let m = herald[acc.len()];
        for take in 0..=m.min(need) {
            acc.push(take);
            counts(herald, need - take, acc, out);
            acc.pop();
        }
    }
    let mut splits = Vec::new();
    counts(herald, k, &mut Vec::new(), &mut splits);
    // Exact placements first.
    splits.sort_by_key(|t| t.iter().zip(herald).filter(|(&t, &m)| t != 0 && t != m).count());
    for take in splits {
        let mut stack: Vec<(usize, Vec<bool>, Vec<Slot>)> = vec![(0, vec![false; k], Vec::new())];
        while let Some((mode, used, slots)) = stack.pop() {
            if out.len() >= limit {
                return out;
            }
            if mode == herald.len() {
                out.push(slots);
                continue;
            }
            let (m, t) = (herald[mode], take[mode]);
            let free: Vec<usize> = (0..k).filter(|&i| !used[i]).collect();
            let first = free.first().copied();
            let choices: Vec<Vec<usize>> = match t {
                0 => vec![vec![]],
                1 => free.iter().map(|&i| vec![i]).collect(),
                _ => {
                    // The lowest free root always goes into this pair to
                    // avoid listing the same grouping twice.
                    let f = first.expect("enough roots");
                    free.iter().skip(1).map(|&j| vec![f, j]).collect()
                }
            };
            for pick in choices.into_iter().rev() {
                let mut used = used.clone();
                let mut slots = slots.clone();
                for &i in &pick {
                    used[i] = true;
                }
                slots.push(match (t, m) {
                    (0, m) => Slot::Decoupled { m },
                    (1, 2) => Slot::Roots(vec![rts[pick[0]], Complex64::new(far, 0.0)]),
                    _ => Slot::Roots(pick.iter().map(|&i| rts[i]).collect()),
                });
                stack.push((mode + 1, used, slots));
            }
        }
    }
    out
}

/// Star seeds ranked by herald probability, as circuit parameter vectors.
fn star_seeds(
    target: &FockVector,
    herald: &[usize],
    limits: &LeafLimits,
    guard: usize,
    opt: &OptimizerConfig,
    count: usize,
) -> Vec<Vec<f64>> {
    if count == 0 || herald.iter().any(|&m| m > 2) {
        return Vec::new();
    }
    let degree = target.effective_degree(1e-12);
    let rts = roots(&fock_to_poly(target)[..=degree]);
    let cutoff = target.cutoff();
    let l = herald.len() + 1;
    let realize_slots = |slots: &[Slot], free: &[f64]| -> Option<CircuitParams> {
        let (b, gamma) = star_form(slots, free);
        let params = realize(&b, &gamma).ok()?;
        params.within(limits).then_some(params)
    };
    let probability = |params: &CircuitParams| -> f64 {
        match leaf_output(params, herald, cutoff + guard) {
            Ok((out, p)) => p * fidelity(&out, target).powi(4),
            Err(_) => 0.0,
        }
    };
    let small = OptimizerConfig {
        restarts: 3,
        max_evals: 300,
        hops: 2,
        polish: false,
        ..opt.clone()
    };
    let mut found: Vec<(f64, Vec<f64>)> = assignments(&rts, herald, 64)
        .into_iter()
        .filter_map(|slots| {
            let bounds = star_bounds(&slots, limits);
            let objective = |free: &[f64]| realize_slots(&slots, free).map_or(0.0, |c| probability(&c));
            let best = maximize(objective, &small.with_bounds(bounds)).ok()?;
            let params = realize_slots(&slots, &best.params)?;
            (best.value > 0.0).then(|| (best.value, params.to_vector()))
        })
        .collect();
    found.sort_by(|a, b| b.0.total_cmp(&a.0));
    debug_assert!(found.iter().all(|f| f.1.len() == CircuitParams::bounds(l, limits).len()));
    found.into_iter().take(count).map(|f| f.1).collect()
}

/// Fits an `(herald.len() + 1)`-mode circuit heralded on `herald` to
/// `sub_target`, whose cutoff must equal the herald total.
///
/// Returns [`Error::Solver`] carrying the best outcome if its fidelity is
/// below the floor.
pub fn solve_first_layer(
    sub_target: &FockVector,
    herald: &[usize],
    opt: &OptimizerConfig,
    settings: &LeafSettings,
) -> Result<LeafOutcome> {
    let budget: usize = herald.iter().sum();
    if sub_target.effective_degree(1e-12) > budget || sub_target.cutoff() > budget && sub_target.amplitudes()[budget + 1..].iter().any(|c| c.norm() > 1e-12) {
        return Err(Error::Contract(format!(
            "sub-target reaches beyond the herald total {budget}"
        )));
    }
    let (target, _) = normalize(&sub_target.truncated(budget))?;
    let l = herald.len() + 1;
    let limits = settings.limits;
    let d = budget + settings.guard;

    let seeds = star_seeds(&target, herald, &limits, settings.guard, opt, settings.seeds.min(opt.restarts));
    let score = |x: &[f64]| -> (f64, f64) {
        let Ok(params) = CircuitParams::from_vector(l, x) else {
            return (0.0, 0.0);
        };
        match leaf_output(&params, herald, d) {
            Ok((out, p)) => (fidelity(&out, &target), p),
            Err(_) => (0.0, 0.0),
        }
    };
    let config = opt.with_bounds(CircuitParams::bounds(l, &limits));
    let optimum = maximize_from(|x: &[f64]| score(x).0, &config, &seeds)?;
    let candidates = seeds.iter().chain(optimum.trace.restarts.iter().map(|r| &r.best_params));
    let (fid, probability, x) = pick(candidates.map(|x| {
        let (f, p) = score(x);
        (f, p, x.clone())
    }))
    .expect("at least one restart");
    let outcome = LeafOutcome {
        herald: herald.to_vec(),
        params: CircuitParams::from_vector(l, &x)?,
        fidelity: fid,
        probability,
        seeds: seeds.len(),
        trace: optimum.trace,
    };
    if probability <= 0.0 {
        return Err(Error::DegenerateHerald(probability));
    }
    if fid < settings.floor {
        return Err(Error::Solver {
            node: String::new(),
            fidelity: fid,
            floor: settings.floor,
            best: Box::new(outcome),
        });
    }
    Ok(outcome)
}
