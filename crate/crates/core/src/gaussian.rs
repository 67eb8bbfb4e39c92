//! Pure multimode Gaussian states and their Fock amplitudes.
//!
//! A state is a symplectic matrix `S` and a mean vector in `xpxp` order with
//! `ħ = 1`, so vacuum quadrature variances are `1/2`. Gates act in the
//! Heisenberg picture, `r → S_g r + d_g`, and compose by left
//! multiplication. Writing `U† a U = α a + β a†` for the symplectic part, the
//! state's Bargmann function is `C exp(½ zᵀBz + γᵀz)` with
//! `B = (α†)⁻¹ βᵀ`, from which Fock amplitudes follow as loop hafnians.
//!
//! The global phase of `C` is exact for circuits whose non-passive gates act
//! on vacuum modes before any beam splitter touches them; in general it is
//! only defined up to a global phase.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{ln_factorial, FockVector, OracleGate};
use crate::hafnian::{loop_hafnian, reduce_matrix, RepetitionVector, SymmetricComplexMatrix};

/// Largest total photon number accepted by [`fock_amplitude`].
pub const MAX_AMPLITUDE_PHOTONS: usize = 32;

const SYMPLECTIC_TOL: f64 = 1e-10;
const HERALD_TAIL_REL: f64 = 1e-12;
const HERALD_MAX_TERMS: usize = 100_000;

/// Pure Gaussian state `(S, mean)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPureState {
    symplectic: DMatrix<f64>,
    mean: DVector<f64>,
}

/// Bargmann data `(B, γ, C)` of a pure Gaussian state.
#[derive(Clone, Debug, PartialEq)]
pub struct BargmannForm {
    pub b: SymmetricComplexMatrix,
    pub gamma: Vec<Complex64>,
    pub prefactor: Complex64,
}

/// Photon counts on heralded modes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionPattern {
    modes: Vec<usize>,
    counts: Vec<usize>,
}

impl DetectionPattern {
    pub fn new(modes: Vec<usize>, counts: Vec<usize>) -> Result<Self> {
        if modes.len() != counts.len() {
            return Err(Error::Contract(format!(
                "detection pattern has {} modes but {} counts",
                modes.len(),
                counts.len()
            )));
        }
        let mut sorted = modes.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract("heralded modes must be distinct".into()));
        }
        Ok(Self { modes, counts })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

fn check_mode(mode: usize, l: usize) -> Result<()> {
    if mode >= l {
        return Err(Error::Contract(format!("mode {mode} out of range for {l} modes")));
    }
    Ok(())
}

impl GaussianPureState {
    pub fn vacuum(l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::Contract("a state needs at least one mode".into()));
        }
        Ok(Self {
            symplectic: DMatrix::identity(2 * l, 2 * l),
            mean: DVector::zeros(2 * l),
        })
    }

    pub fn mode_count(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn symplectic(&self) -> &DMatrix<f64> {
        &self.symplectic
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `V = ½ S Sᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.symplectic * self.symplectic.transpose() * 0.5
    }

    /// `max |S Ω Sᵀ − Ω|`, scaled by `max(1, max|S|²)`.
    pub fn symplectic_error(&self) -> f64 {
        let n = self.symplectic.nrows();
        let mut omega = DMatrix::<f64>::zeros(n, n);
        for j in 0..n / 2 {
            omega[(2 * j, 2 * j + 1)] = 1.0;
            omega[(2 * j + 1, 2 * j)] = -1.0;
        }
        let lhs = &self.symplectic * &omega * self.symplectic.transpose();
        let scale = self.symplectic.amax().powi(2).max(1.0);
        (lhs - omega).amax() / scale
    }

    /// Applies a gate acting on the given modes: `block` is the `2k×2k`
    /// symplectic on those modes and `shift` the displacement.
    fn apply_local(&self, modes: &[usize], block: &[f64], shift: &[f64]) -> Self {
        let k = 2 * modes.len();
        let rows: Vec<usize> = modes.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let mut s = self.symplectic.clone();
        let mut mean = self.mean.clone();
        let cols = s.ncols();
        for c in 0..cols {
            let old: Vec<f64> = rows.iter().map(|&r| self.symplectic[(r, c)]).collect();
            for (i, &r) in rows.iter().enumerate() {
                s[(r, c)] = (0..k).map(|j| block[i * k + j] * old[j]).sum();
            }
        }
        let old: Vec<f64> = rows.iter().map(|&r| self.mean[r]).collect();
        for (i, &r) in rows.iter().enumerate() {
            mean[r] = (0..k).map(|j| block[i * k + j] * old[j]).sum::<f64>() + shift[i];
        }
        Self { symplectic: s, mean }
    }

    /// Squeezes `mode` by `S(r e^{iφ})`; at `φ = 0`, `r > 0` reduces the
    /// position variance to `e^{−2r}/2`.
    pub fn apply_squeeze(&self, mode: usize, r: f64, phi: f64) -> Result<Self> {
        check_mode(mode, self.mode_count())?;
        let (ch, sh) = (r.cosh(), r.sinh());
        let (c, s) = (phi.cos(), phi.sin());
        let block = [ch - c * sh, -s * sh, -s * sh, ch + c * sh];
        Ok(self.apply_local(&[mode], &block, &[0.0, 0.0]))
    }

    /// Displaces `mode` by `D(α)`, shifting its mean by `√2 (Re α, Im α)`.
    pub fn apply_displacement(&self, mode: usize, alpha: Complex64) -> Result<Self> {
        check_mode(mode, self.mode_count())?;
        let mut out = self.clone();
        out.mean[2 * mode] += std::f64::consts::SQRT_2 * alpha.re;
        out.mean[2 * mode + 1] += std::f64::consts::SQRT_2 * alpha.im;
        Ok(out)
    }

    /// Rotates `mode` by `e^{iφ n}`, i.e. `a → e^{iφ} a`.
    pub fn apply_phase(&self, mode: usize, phi: f64) -> Result<Self> {
        check_mode(mode, self.mode_count())?;
        let (c, s) = (phi.cos(), phi.sin());
        Ok(self.apply_local(&[mode], &[c, -s, s, c], &[0.0, 0.0]))
    }

    /// Beam splitter `exp(θ(e^{iφ} a b† − e^{−iφ} a† b))` on modes
    /// `(mode_a, mode_b)`: `a → cosθ a − e^{−iφ} sinθ b`,
    /// `b → e^{iφ} sinθ a + cosθ b`.
    pub fn apply_beamsplitter(&self, mode_a: usize, mode_b: usize, theta: f64, phi: f64) -> Result<Self> {
        check_mode(mode_a, self.mode_count())?;
        check_mode(mode_b, self.mode_count())?;
        if mode_a == mode_b {
            return Err(Error::Contract("beam splitter needs two distinct modes".into()));
        }
        let (c, s) = (theta.cos(), theta.sin());
        let w = [
            [Complex64::new(c, 0.0), -Complex64::from_polar(s, -phi)],
            [Complex64::from_polar(s, phi), Complex64::new(c, 0.0)],
        ];
        // x' = Re W x − Im W p, p' = Im W x + Re W p.
        let mut block = [0.0; 16];
        for i in 0..2 {
            for j in 0..2 {
                block[(2 * i) * 4 + 2 * j] = w[i][j].re;
                block[(2 * i) * 4 + 2 * j + 1] = -w[i][j].im;
                block[(2 * i + 1) * 4 + 2 * j] = w[i][j].im;
                block[(2 * i + 1) * 4 + 2 * j + 1] = w[i][j].re;
            }
        }
        Ok(self.apply_local(&[mode_a, mode_b], &block, &[0.0; 4]))
    }

    /// `(α, β)` with `U† a U = α a + β a†`.
    fn bogoliubov(&self) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
        let l = self.mode_count();
        let s = &self.symplectic;
        let mut alpha = DMatrix::zeros(l, l);
        let mut beta = DMatrix::zeros(l, l);
        for j in 0..l {
            for k in 0..l {
                let (xx, xp) = (s[(2 * j, 2 * k)], s[(2 * j, 2 * k + 1)]);
                let (px, pp) = (s[(2 * j + 1, 2 * k)], s[(2 * j + 1, 2 * k + 1)]);
                alpha[(j, k)] = Complex64::new(0.5 * (xx + pp), 0.5 * (px - xp));
                beta[(j, k)] = Complex64::new(0.5 * (xx - pp), 0.5 * (px + xp));
            }
        }
        (alpha, beta)
    }
}

/// Extracts `(B, γ, C)`.
pub fn bargmann_form(st: &GaussianPureState) -> Result<BargmannForm> {
    let err = st.symplectic_error();
    if !(err <= SYMPLECTIC_TOL) {
        return Err(Error::Validity(format!("state is not symplectic (error {err:e})")));
    }
    let l = st.mode_count();
    let (alpha, beta) = st.bogoliubov();
    let lu = alpha.adjoint().lu();
    let det_alpha = alpha.determinant().norm();
    let b_raw = lu
        .solve(&beta.transpose())
        .ok_or_else(|| Error::Validity("passive block of the state is singular".into()))?;
    let b = SymmetricComplexMatrix::from_upper(l, |i, j| 0.5 * (b_raw[(i, j)] + b_raw[(j, i)]));
    let delta: Vec<Complex64> = (0..l)
        .map(|j| Complex64::new(st.mean[2 * j], st.mean[2 * j + 1]) / std::f64::consts::SQRT_2)
        .collect();
    let mut gamma = delta.clone();
    let mut quad = Complex64::new(0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            let bij = b.get(i, j);
            gamma[i] -= bij * delta[j].conj();
            quad += delta[i].conj() * bij * delta[j].conj();
        }
    }
    let delta_sq: f64 = delta.iter().map(|d| d.norm_sqr()).sum();
    let prefactor = (-0.5 * delta_sq + 0.5 * quad).exp() / det_alpha.sqrt();
    Ok(BargmannForm { b, gamma, prefactor })
}

impl BargmannForm {
    /// `⟨n⃗|ψ⟩ = C lhaf(reduce(B, n⃗, γ)) / √(Π n_i!)`.
    pub fn amplitude(&self, n: &[usize]) -> Result<Complex64> {
        if n.len() != self.gamma.len() {
            return Err(Error::Contract(format!(
                "photon pattern has {} entries for {} modes",
                n.len(),
                self.gamma.len()
            )));
        }
        let total: usize = n.iter().sum();
        if total > MAX_AMPLITUDE_PHOTONS {
            return Err(Error::Capacity {
                what: "total photon number of a Fock amplitude",
                got: total,
                limit: MAX_AMPLITUDE_PHOTONS,
            });
        }
        let reduced = reduce_matrix(&self.b, &RepetitionVector::new(n.to_vec()), &self.gamma)?;
        let lhaf = loop_hafnian(&reduced)?;
        let ln_norm: f64 = n.iter().map(|&k| ln_factorial(k)).sum();
        Ok(self.prefactor * lhaf * (-0.5 * ln_norm).exp())
    }
}

/// Exact amplitude `⟨n⃗|ψ⟩`.
pub fn fock_amplitude(st: &GaussianPureState, n: &[usize]) -> Result<Complex64> {
    bargmann_form(st)?.amplitude(n)
}

/// Conditional output state of `output_mode` given `pattern` on all other
/// modes, with the herald probability.
///
/// Amplitudes `a_n = ⟨n, m⃗|ψ⟩` come from loop hafnians for
/// `n ≤ max(d, Σm)`. The conditional Bargmann function is
/// `exp(½bz² + gz)·P(z)` with `deg P ≤ Σm`, which continues the sequence
/// beyond that point until the tail is below `1e-12` of the running
/// probability. The returned vector holds every computed amplitude, so its
/// cutoff is at least `d`, and is normalized.
pub fn heralded_state(
    st: &GaussianPureState,
    pattern: &DetectionPattern,
    output_mode: usize,
    d: usize,
) -> Result<(FockVector, f64)> {
    let l = st.mode_count();
    check_mode(output_mode, l)?;
    for &m in pattern.modes() {
        check_mode(m, l)?;
        if m == output_mode {
            return Err(Error::Contract("the output mode cannot be heralded".into()));
        }
    }
    if pattern.modes().len() + 1 != l {
        return Err(Error::Contract(format!(
            "pattern heralds {} of the {} non-output modes",
            pattern.modes().len(),
            l - 1
        )));
    }
    let form = bargmann_form(st)?;
    let (amps, probability) = herald_series(&form, pattern, output_mode, d)?;
    if !(probability > 1e-300) {
        return Err(Error::DegenerateHerald(probability));
    }
    let scale = 1.0 / probability.sqrt();
    let mut out = FockVector::normalized(amps.iter().map(|a| a * scale).collect())?;
    if out.cutoff() < d {
        out = out.truncated(d);
    }
    Ok((out, probability))
}

fn herald_series(
    form: &BargmannForm,
    pattern: &DetectionPattern,
    output: usize,
    d: usize,
) -> Result<(Vec<Complex64>, f64)> {
    let m_tot = pattern.total();
    if m_tot > MAX_AMPLITUDE_PHOTONS {
        return Err(Error::Capacity {
            what: "heralded photon number",
            got: m_tot,
            limit: MAX_AMPLITUDE_PHOTONS,
        });
    }
    let exact_upto = d.max(m_tot).min(MAX_AMPLITUDE_PHOTONS - m_tot).max(m_tot);
    let mut base = vec![0usize; form.gamma.len()];
    for (&m, &c) in pattern.modes().iter().zip(pattern.counts()) {
        base[m] = c;
    }
    let mut amps: Vec<Complex64> = (0..=exact_upto)
        .into_par_iter()
        .map(|n| {
            let mut counts = base.clone();
            counts[output] = n;
            form.amplitude(&counts)
        })
        .collect::<Result<_>>()?;

    let b = form.b.get(output, output);
    let g = form.gamma[output];
    let poly = residual_polynomial(&amps[..=m_tot], b, g);

    let mut eps = vec![Complex64::new(1.0, 0.0)];
    let mut probability: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let floor = HERALD_TAIL_REL * (1.0 - b.norm()).max(1e-6);
    let mut n = amps.len();
    loop {
        let last = amps[n - 1].norm_sqr() + if n >= 2 { amps[n - 2].norm_sqr() } else { 0.0 };
        if n > d + 1 && n > m_tot + 2 && last <= floor * probability {
            break;
        }
        if n >= HERALD_MAX_TERMS {
            break;
        }
        while eps.len() <= n {
            let k = eps.len() - 1;
            let prev = if k >= 1 { eps[k - 1] } else { Complex64::new(0.0, 0.0) };
            eps.push((g * eps[k] + b * (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt());
        }
        let lf = ln_factorial(n);
        let a: Complex64 = poly
            .iter()
            .enumerate()
            .take(n + 1)
            .map(|(j, &p)| p * (0.5 * (lf - ln_factorial(n - j))).exp() * eps[n - j])
            .sum();
        probability += a.norm_sqr();
        amps.push(a);
        n += 1;
    }
    Ok((amps, probability))
}

/// Coefficients of `P(z) = exp(−½bz² − gz)·Σ a_n zⁿ/√n!` up to
/// `deg = a.len() − 1`.
fn residual_polynomial(a: &[Complex64], b: Complex64, g: Complex64) -> Vec<Complex64> {
    let deg = a.len() - 1;
    let mut h = vec![Complex64::new(0.0, 0.0); deg + 1];
    h[0] = Complex64::new(1.0, 0.0);
    for k in 0..deg {
        let prev = if k >= 1 { h[k - 1] } else { Complex64::new(0.0, 0.0) };
        h[k + 1] = (-g * h[k] - b * prev) / (k + 1) as f64;
    }
    let coef: Vec<Complex64> = a
        .iter()
        .enumerate()
        .map(|(n, &x)| x * (-0.5 * ln_factorial(n)).exp())
        .collect();
    (0..=deg)
        .map(|k| (0..=k).map(|j| coef[j] * h[k - j]).sum())
        .collect()
}

/// Gate names in serialized circuits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Squeeze,
    Displace,
    Phase,
    Beamsplitter,
}

/// One circuit operation. Parameters: squeeze `[r, φ]`, displace
/// `[Re α, Im α]`, phase `[φ]`, beamsplitter `[θ, φ]` on `modes = [a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitOp {
    pub op: GateKind,
    pub modes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Ordered gate list applied to `modes` vacua.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub modes: usize,
    pub ops: Vec<CircuitOp>,
}

impl CircuitOp {
    pub fn squeeze(mode: usize, r: f64, phi: f64) -> Self {
        Self {
            op: GateKind::Squeeze,
            modes: vec![mode],
            params: vec![r, phi],
        }
    }

    pub fn displace(mode: usize, alpha: Complex64) -> Self {
        Self {
            op: GateKind::Displace,
            modes: vec![mode],
            params: vec![alpha.re, alpha.im],
        }
    }

    pub fn phase(mode: usize, phi: f64) -> Self {
        Self {
            op: GateKind::Phase,
            modes: vec![mode],
            params: vec![phi],
        }
    }

    pub fn beamsplitter(a: usize, b: usize, theta: f64, phi: f64) -> Self {
        Self {
            op: GateKind::Beamsplitter,
            modes: vec![a, b],
            params: vec![theta, phi],
        }
    }

    fn gate(&self) -> Result<OracleGate> {
        let (want_modes, want_params) = match self.op {
            GateKind::Squeeze | GateKind::Displace => (1, 2),
            GateKind::Phase => (1, 1),
            GateKind::Beamsplitter => (2, 2),
        };
        if self.modes.len() != want_modes || self.params.len() != want_params {
            return Err(Error::Contract(format!(
                "{:?} takes {want_modes} mode(s) and {want_params} parameter(s), got {} and {}",
                self.op,
                self.modes.len(),
                self.params.len()
            )));
        }
        if let Some(bad) = self.params.iter().find(|p| !p.is_finite()) {
            return Err(Error::Contract(format!("non-finite gate parameter {bad}")));
        }
        let p = &self.params;
        Ok(match self.op {
            GateKind::Squeeze => OracleGate::Squeeze {
                mode: self.modes[0],
                r: p[0],
                phi: p[1],
            },
            GateKind::Displace => OracleGate::Displace {
                mode: self.modes[0],
                alpha: Complex64::new(p[0], p[1]),
            },
            GateKind::Phase => OracleGate::Phase {
                mode: self.modes[0],
                phi: p[0],
            },
            GateKind::Beamsplitter => OracleGate::Beamsplitter {
                a: self.modes[0],
                b: self.modes[1],
                theta: p[0],
                phi: p[1],
            },
        })
    }
}

impl Circuit {
    pub fn new(modes: usize) -> Self {
        Self { modes, ops: Vec::new() }
    }

    pub fn push(&mut self, op: CircuitOp) -> &mut Self {
        self.ops.push(op);
        self
    }

    /// Runs the circuit on vacuum.
    pub fn run(&self) -> Result<GaussianPureState> {
        let mut st = GaussianPureState::vacuum(self.modes)?;
        for op in &self.ops {
            st = match op.gate()? {
                OracleGate::Squeeze { mode, r, phi } => st.apply_squeeze(mode, r, phi)?,
                OracleGate::Displace { mode, alpha } => st.apply_displacement(mode, alpha)?,
                OracleGate::Phase { mode, phi } => st.apply_phase(mode, phi)?,
                OracleGate::Beamsplitter { a, b, theta, phi } => st.apply_beamsplitter(a, b, theta, phi)?,
            };
        }
        Ok(st)
    }

    /// The same gate list for [`crate::fock::simulate_truncated`].
    pub fn oracle_gates(&self) -> Result<Vec<OracleGate>> {
        self.ops.iter().map(CircuitOp::gate).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{fidelity, simulate_truncated};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn squeezed_closed_form(r: f64, n: usize) -> f64 {
        if n % 2 == 1 {
            return 0.0;
        }
        let k = n / 2;
        (-r.tanh()).powi(k as i32) * (0.5 * ln_factorial(n) - ln_factorial(k)).exp()
            / 2f64.powi(k as i32)
            / r.cosh().sqrt()
    }

    fn tmsv(r: f64) -> GaussianPureState {
        GaussianPureState::vacuum(2)
            .unwrap()
            .apply_squeeze(0, r, 0.0)
            .unwrap()
            .apply_squeeze(1, -r, 0.0)
            .unwrap()
            .apply_beamsplitter(0, 1, FRAC_PI_4, 0.0)
            .unwrap()
    }

    /// Per-mode squeeze/displace layer followed by a random passive network.
    fn random_structured_circuit(rng: &mut ChaCha8Rng, modes: usize) -> Circuit {
        let mut circ = Circuit::new(modes);
        for m in 0..modes {
            circ.push(CircuitOp::squeeze(m, rng.gen_range(-1.2..1.2), rng.gen_range(0.0..2.0 * PI)));
            let (rad, ang) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..2.0 * PI));
            circ.push(CircuitOp::displace(m, Complex64::from_polar(rad, ang)));
        }
        for _ in 0..(2 * modes) {
            let a = rng.gen_range(0..modes);
            let b = (a + rng.gen_range(1..modes)) % modes;
            circ.push(CircuitOp::beamsplitter(a, b, rng.gen_range(-PI..PI), rng.gen_range(0.0..2.0 * PI)));
            circ.push(CircuitOp::phase(rng.gen_range(0..modes), rng.gen_range(0.0..2.0 * PI)));
        }
        circ
    }

    fn patterns_up_to(modes: usize, total: usize) -> Vec<Vec<usize>> {
        if modes == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for first in 0..=total {
            for mut rest in patterns_up_to(modes - 1, total - first) {
                rest.insert(0, first);
                out.push(rest);
            }
        }
        out
    }

    #[test]
    fn vacuum_cases() {
        let v = GaussianPureState::vacuum(1).unwrap();
        assert_eq!(v.covariance(), DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
        assert_eq!(GaussianPureState::vacuum(3).unwrap().symplectic(), &DMatrix::identity(6, 6));
        assert!((fock_amplitude(&GaussianPureState::vacuum(2).unwrap(), &[0, 0]).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!(matches!(GaussianPureState::vacuum(0), Err(Error::Contract(_))));
        let form = bargmann_form(&GaussianPureState::vacuum(2).unwrap()).unwrap();
        assert!(form.b.entries().iter().all(|x| x.norm() == 0.0));
        assert!(form.gamma.iter().all(|x| x.norm() == 0.0));
        assert!((form.prefactor - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn squeeze_cases() {
        let v = GaussianPureState::vacuum(1).unwrap();
        assert_eq!(v.apply_squeeze(0, 0.0, 0.3).unwrap(), v);
        let sq = v.apply_squeeze(0, 2f64.ln(), 0.0).unwrap();
        let cov = sq.covariance();
        assert!((cov[(0, 0)] - 0.125).abs() < 1e-14);
        assert!((cov[(1, 1)] - 2.0).abs() < 1e-14);
        assert!(fock_amplitude(&sq, &[1]).unwrap().norm() < 1e-15);
        let r = 0.5;
        let sq = v.apply_squeeze(0, r, 0.0).unwrap();
        for n in 0..12 {
            let got = fock_amplitude(&sq, &[n]).unwrap();
            assert!((got - c(squeezed_closed_form(r, n), 0.0)).norm() < 1e-9, "n={n}");
        }
        let form = bargmann_form(&sq).unwrap();
        assert!((form.b.get(0, 0) - c(-r.tanh(), 0.0)).norm() < 1e-14);
        assert!((form.prefactor - c(1.0 / r.cosh().sqrt(), 0.0)).norm() < 1e-14);
        assert!(matches!(v.apply_squeeze(1, 0.1, 0.0), Err(Error::Contract(_))));
    }

    #[test]
    fn displacement_cases() {
        let v = GaussianPureState::vacuum(1).unwrap();
        assert_eq!(v.apply_displacement(0, c(0.0, 0.0)).unwrap(), v);
        let alpha = c(0.8, -0.4);
        let coh = v.apply_displacement(0, alpha).unwrap();
        let vac = fock_amplitude(&coh, &[0]).unwrap();
        assert!((vac.norm_sqr() - (-alpha.norm_sqr()).exp()).abs() < 1e-14);
        let form = bargmann_form(&coh).unwrap();
        assert!((form.gamma[0] - alpha).norm() < 1e-14);
        assert!((form.prefactor.norm() - (-alpha.norm_sqr() / 2.0).exp()).abs() < 1e-14);
        for n in 0..10 {
            let want = (-alpha.norm_sqr() / 2.0).exp() * alpha.powu(n as u32) * (-0.5 * ln_factorial(n)).exp();
            assert!((fock_amplitude(&coh, &[n]).unwrap() - want).norm() < 1e-12);
        }
        let sq = v.apply_squeeze(0, 0.4, 1.0).unwrap();
        let back = sq.apply_displacement(0, alpha).unwrap().apply_displacement(0, -alpha).unwrap();
        assert!((back.mean() - sq.mean()).amax() < 1e-12);
        assert!((back.symplectic() - sq.symplectic()).amax() < 1e-12);
    }

    #[test]
    fn beamsplitter_and_phase_cases() {
        let st = GaussianPureState::vacuum(2)
            .unwrap()
            .apply_squeeze(0, 0.7, 0.0)
            .unwrap()
            .apply_displacement(1, c(0.3, 0.2))
            .unwrap();
        assert_eq!(st.apply_beamsplitter(0, 1, 0.0, 0.4).unwrap(), st);
        assert!(matches!(st.apply_beamsplitter(1, 1, 0.3, 0.0), Err(Error::Contract(_))));

        // Full reflection swaps the modes up to a phase: photon statistics swap.
        let swapped = st.apply_beamsplitter(0, 1, FRAC_PI_2, 0.0).unwrap();
        for (i, j) in [(0, 0), (2, 0), (0, 1), (1, 2), (2, 1)] {
            let a = fock_amplitude(&st, &[i, j]).unwrap().norm();
            let b = fock_amplitude(&swapped, &[j, i]).unwrap().norm();
            assert!((a - b).abs() < 1e-12);
        }

        let one = GaussianPureState::vacuum(1).unwrap().apply_squeeze(0, 0.9, 0.2).unwrap();
        assert_eq!(one.apply_phase(0, 0.0).unwrap(), one);
        let full = one.apply_phase(0, 2.0 * PI).unwrap();
        assert!((full.symplectic() - one.symplectic()).amax() < 1e-12);
        let twice = one.apply_phase(0, 0.4).unwrap().apply_phase(0, 0.9).unwrap();
        let once = one.apply_phase(0, 1.3).unwrap();
        assert!((twice.symplectic() - once.symplectic()).amax() < 1e-12);
    }

    #[test]
    fn single_photon_splits_evenly() {
        // Heralding one photon of a two-mode squeezed vacuum leaves |1⟩ on
        // mode 0; a 50:50 splitter with vacuum mode 2 then sends it either way.
        let st = GaussianPureState::vacuum(3)
            .unwrap()
            .apply_squeeze(0, 0.3, 0.0)
            .unwrap()
            .apply_squeeze(1, -0.3, 0.0)
            .unwrap()
            .apply_beamsplitter(0, 1, FRAC_PI_4, 0.0)
            .unwrap()
            .apply_beamsplitter(0, 2, FRAC_PI_4, 0.0)
            .unwrap();
        let p10 = fock_amplitude(&st, &[1, 1, 0]).unwrap().norm_sqr();
        let p01 = fock_amplitude(&st, &[0, 1, 1]).unwrap().norm_sqr();
        assert!(p10 > 0.0);
        assert!((p10 / (p10 + p01) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tmsv_herald_gives_fock_state() {
        let st = tmsv(0.6);
        for k in 0..4 {
            let pattern = DetectionPattern::new(vec![1], vec![k]).unwrap();
            let (out, p) = heralded_state(&st, &pattern, 0, 6).unwrap();
            assert!((fidelity(&out, &FockVector::basis(k)) - 1.0).abs() < 1e-12);
            let lambda = 0.6f64.tanh();
            let want = (1.0 - lambda * lambda) * lambda.powi(2 * k as i32);
            assert!((p - want).abs() < 1e-12, "k={k}: {p} vs {want}");
        }
    }

    #[test]
    fn vacuum_herald_is_trivial() {
        let st = GaussianPureState::vacuum(3).unwrap();
        let pattern = DetectionPattern::new(vec![1, 2], vec![0, 0]).unwrap();
        let (out, p) = heralded_state(&st, &pattern, 0, 4).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert!((fidelity(&out, &FockVector::vacuum()) - 1.0).abs() < 1e-15);
        assert!(out.cutoff() >= 4);
    }

    #[test]
    fn herald_errors() {
        let st = GaussianPureState::vacuum(3).unwrap();
        let unreachable = DetectionPattern::new(vec![1, 2], vec![1, 0]).unwrap();
        assert!(matches!(heralded_state(&st, &unreachable, 0, 4), Err(Error::DegenerateHerald(_))));
        let partial = DetectionPattern::new(vec![1], vec![0]).unwrap();
        assert!(matches!(heralded_state(&st, &partial, 0, 4), Err(Error::Contract(_))));
        let overlapping = DetectionPattern::new(vec![0, 1], vec![0, 0]).unwrap();
        assert!(matches!(heralded_state(&st, &overlapping, 0, 4), Err(Error::Contract(_))));
        assert!(DetectionPattern::new(vec![1, 1], vec![0, 0]).is_err());
        assert!(DetectionPattern::new(vec![1], vec![0, 0]).is_err());
    }

    #[test]
    fn herald_with_two_two_pattern_is_quartic() {
        // Vacuum output mode coupled with equal weights to two oppositely
        // squeezed modes: b = g = 0 on the output, so the heralded state is a
        // polynomial of degree at most 4.
        let theta1: f64 = 1.0;
        let theta2 = theta1.sin().atan();
        let mut circ = Circuit::new(3);
        circ.push(CircuitOp::squeeze(1, 0.8, 0.0))
            .push(CircuitOp::squeeze(2, -0.8, 0.0))
            .push(CircuitOp::beamsplitter(0, 1, theta1, 0.0))
            .push(CircuitOp::beamsplitter(0, 2, theta2, 0.0))
            .push(CircuitOp::beamsplitter(1, 2, 0.5, 0.7));
        let st = circ.run().unwrap();
        let pattern = DetectionPattern::new(vec![1, 2], vec![2, 2]).unwrap();
        let (out, p) = heralded_state(&st, &pattern, 0, 8).unwrap();
        assert!(p > 0.0 && p <= 1.0);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        let tail: f64 = out.amplitudes().iter().skip(5).map(|a| a.norm_sqr()).sum();
        assert!(tail < 1e-9, "tail {tail}");
        assert!(out.get(4).norm() > 1e-3);
    }

    #[test]
    fn herald_tail_recurrence_matches_hafnians() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let st = random_structured_circuit(&mut rng, 3).run().unwrap();
        let pattern = DetectionPattern::new(vec![1, 2], vec![1, 2]).unwrap();
        let (short, p_short) = heralded_state(&st, &pattern, 0, 0).unwrap();
        let (long, p_long) = heralded_state(&st, &pattern, 0, 16).unwrap();
        assert!((p_short - p_long).abs() < 1e-12 * p_long.max(1e-300) + 1e-15);
        for n in 0..=16 {
            assert!((short.get(n) - long.get(n)).norm() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn structured_circuits_match_truncated_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..6 {
            let modes = 2 + trial % 2;
            let circ = random_structured_circuit(&mut rng, modes);
            let st = circ.run().unwrap();
            let keep = 12;
            let tensor = simulate_truncated(modes, &circ.oracle_gates().unwrap(), keep).unwrap();
            for n in patterns_up_to(modes, 8) {
                let idx = n.iter().fold(0, |acc, &k| acc * (keep + 1) + k);
                let got = fock_amplitude(&st, &n).unwrap();
                assert!((got - tensor[idx]).norm() < 1e-6, "trial {trial} pattern {n:?}: {got} vs {}", tensor[idx]);
            }
        }
    }

    #[test]
    fn circuit_serde_roundtrip() {
        let mut circ = Circuit::new(2);
        circ.push(CircuitOp::squeeze(0, 0.3, 0.1))
            .push(CircuitOp::beamsplitter(0, 1, 0.4, 0.0));
        let json = serde_json::to_string(&circ).unwrap();
        assert!(json.contains("\"op\":\"beamsplitter\""));
        let back: Circuit = serde_json::from_str(&json).unwrap();
        assert_eq!(back, circ);
        let bad = Circuit {
            modes: 2,
            ops: vec![CircuitOp {
                op: GateKind::Phase,
                modes: vec![0],
                params: vec![],
            }],
        };
        assert!(matches!(bad.run(), Err(Error::Contract(_))));
    }

    #[test]
    fn non_symplectic_state_rejected() {
        let mut st = GaussianPureState::vacuum(1).unwrap();
        st.symplectic[(0, 0)] = 1.5;
        assert!(matches!(bargmann_form(&st), Err(Error::Validity(_))));
    }

    #[test]
    fn capacity_error() {
        let st = GaussianPureState::vacuum(2).unwrap();
        assert!(matches!(fock_amplitude(&st, &[20, 13]), Err(Error::Capacity { .. })));
    }

    #[test]
    fn hundred_random_operations_stay_symplectic() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut st = GaussianPureState::vacuum(4).unwrap();
        for _ in 0..100 {
            let m = rng.gen_range(0..4);
            st = match rng.gen_range(0..4) {
                0 => st.apply_squeeze(m, rng.gen_range(-0.3..0.3), rng.gen_range(0.0..6.3)).unwrap(),
                1 => st.apply_displacement(m, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).unwrap(),
                2 => st.apply_phase(m, rng.gen_range(0.0..6.3)).unwrap(),
                _ => st.apply_beamsplitter(m, (m + 1 + rng.gen_range(0..3)) % 4, rng.gen_range(-3.0..3.0), rng.gen_range(0.0..6.3)).unwrap(),
            };
        }
        assert!(st.symplectic_error() < 1e-10, "{}", st.symplectic_error());
        let det = (st.covariance() * 2.0).determinant();
        assert!((det - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn amplitudes_general_order_match_oracle_up_to_phase(seed in any::<u64>()) {
            // Squeezers and displacements in arbitrary order on each mode
            // before the passive network.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut circ = Circuit::new(2);
            for m in 0..2 {
                for _ in 0..2 {
                    if rng.gen_bool(0.5) {
                        circ.push(CircuitOp::squeeze(m, rng.gen_range(-0.6..0.6), rng.gen_range(0.0..6.3)));
                    } else {
                        circ.push(CircuitOp::displace(m, c(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7))));
                    }
                    circ.push(CircuitOp::phase(m, rng.gen_range(0.0..6.3)));
                }
            }
            circ.push(CircuitOp::beamsplitter(0, 1, rng.gen_range(-1.5..1.5), rng.gen_range(0.0..6.3)));
            let st = circ.run().unwrap();
            let keep = 10;
            let tensor = simulate_truncated(2, &circ.oracle_gates().unwrap(), keep).unwrap();
            let pats = patterns_up_to(2, 6);
            let ours: Vec<Complex64> = pats.iter().map(|n| fock_amplitude(&st, n).unwrap()).collect();
            let theirs: Vec<Complex64> = pats.iter().map(|n| tensor[n[0] * (keep + 1) + n[1]]).collect();
            let inner: Complex64 = ours.iter().zip(&theirs).map(|(a, b)| a.conj() * b).sum();
            let phase = if inner.norm() > 0.0 { inner / inner.norm() } else { c(1.0, 0.0) };
            for (a, b) in ours.iter().zip(&theirs) {
                prop_assert!((a * phase - b).norm() < 1e-6);
            }
        }

        #[test]
        fn probability_mass_monotone_and_bounded(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let st = random_structured_circuit(&mut rng, 2).run().unwrap();
            let mut last = 0.0;
            for total in 0..14 {
                let mass: f64 = patterns_up_to(2, total).iter().map(|n| fock_amplitude(&st, n).unwrap().norm_sqr()).sum();
                prop_assert!(mass + 1e-12 >= last);
                prop_assert!(mass <= 1.0 + 1e-9);
                last = mass;
            }
        }

        #[test]
        fn prefactor_is_vacuum_overlap(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let st = random_structured_circuit(&mut rng, 3).run().unwrap();
            let form = bargmann_form(&st).unwrap();
            let vac = fock_amplitude(&st, &[0, 0, 0]).unwrap();
            prop_assert!((form.prefactor.norm_sqr() - vac.norm_sqr()).abs() < 1e-9);
            let b = DMatrix::from_fn(3, 3, |i, j| form.b.get(i, j));
            let sv = b.singular_values();
            prop_assert!(sv.max() < 1.0);
        }

        #[test]
        fn heralded_output_normalized(seed in any::<u64>(), m1 in 0usize..3, m2 in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let st = random_structured_circuit(&mut rng, 3).run().unwrap();
            let pattern = DetectionPattern::new(vec![1, 2], vec![m1, m2]).unwrap();
            let (out, p) = heralded_state(&st, &pattern, 0, 6).unwrap();
            prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
            prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
            // Agreement with direct amplitudes on the exact range.
            for n in 0..=6 {
                let direct = fock_amplitude(&st, &[n, m1, m2]).unwrap() / p.sqrt();
                prop_assert!((direct - out.get(n)).norm() < 1e-9);
            }
        }
    }
}
