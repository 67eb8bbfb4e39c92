//! Truncated single-mode Fock-space arithmetic.
//!
//! Beam-splitter convention (shared with [`crate::gaussian`]): `B(θ)` maps
//! creation operators as `a† → cosθ a† + sinθ b†`, `b† → −sinθ a† + cosθ b†`,
//! so that `⟨n,0|B(θ)|i,j⟩ = √(n!/(i!j!)) cosⁱθ (−sinθ)ʲ`. It is generated by
//! `θ (a b† − a† b)`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Amplitudes `c_0..c_d` over the Fock states of one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockVector {
    amps: Vec<Complex64>,
    normalized: bool,
}

impl FockVector {
    /// Wraps raw amplitudes; the result is tagged unnormalized.
    pub fn from_raw(amps: Vec<Complex64>) -> Self {
        Self {
            amps,
            normalized: false,
        }
    }

    /// Wraps amplitudes and normalizes them.
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        Ok(normalize(&Self::from_raw(amps))?.0)
    }

    pub fn from_real(amps: &[f64]) -> Self {
        Self::from_raw(amps.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// The Fock state `|n⟩`.
    pub fn basis(n: usize) -> Self {
        let mut amps = vec![ZERO; n + 1];
        amps[n] = Complex64::new(1.0, 0.0);
        Self {
            amps,
            normalized: true,
        }
    }

    pub fn vacuum() -> Self {
        Self::basis(0)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    /// Amplitude of `|n⟩`, zero beyond the stored cutoff.
    pub fn get(&self, n: usize) -> Complex64 {
        self.amps.get(n).copied().unwrap_or(ZERO)
    }

    /// Highest stored Fock index `d`.
    pub fn cutoff(&self) -> usize {
        self.amps.len().saturating_sub(1)
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Drops amplitudes above `d` (padding with zeros if shorter). The result
    /// is tagged unnormalized unless nothing was dropped.
    pub fn truncated(&self, d: usize) -> Self {
        let mut amps = self.amps.clone();
        let dropped = amps.len() > d + 1 && amps[d + 1..].iter().any(|c| *c != ZERO);
        amps.resize(d + 1, ZERO);
        Self {
            amps,
            normalized: self.normalized && !dropped,
        }
    }

    /// Index of the highest amplitude whose modulus exceeds `tol · max|c|`.
    pub fn effective_degree(&self, tol: f64) -> usize {
        let max = self.amps.iter().map(|c| c.norm()).fold(0.0, f64::max);
        self.amps
            .iter()
            .rposition(|c| c.norm() > tol * max)
            .unwrap_or(0)
    }

    /// Mean photon number `Σ n|c_n|² / Σ|c_n|²`.
    pub fn mean_photon_number(&self) -> f64 {
        let norm = self.norm_sqr();
        self.amps
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum::<f64>()
            / norm
    }

    /// Writes the `n re im` text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (n, c) in self.amps.iter().enumerate() {
            let _ = writeln!(out, "{n} {:e} {:e}", c.re, c.im);
        }
        out
    }

    /// Parses the `n re im` text format. Blank lines and lines starting with
    /// `#` are ignored; missing indices read as zero. The result is
    /// tagged unnormalized.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected `n re im`, got {line:?}",
                    lineno + 1
                )));
            }
            let n: usize = fields[0]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad index: {e}", lineno + 1)))?;
            let re: f64 = fields[1]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad real part: {e}", lineno + 1)))?;
            let im: f64 = fields[2]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad imaginary part: {e}", lineno + 1)))?;
            entries.push((n, Complex64::new(re, im)));
        }
        if entries.is_empty() {
            return Err(Error::Parse("no amplitudes found".into()));
        }
        let d = entries.iter().map(|e| e.0).max().unwrap_or(0);
        let mut amps = vec![ZERO; d + 1];
        for (n, c) in entries {
            amps[n] = c;
        }
        Ok(Self::from_raw(amps))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Returns the unit vector and the original norm `N`.
pub fn normalize(v: &FockVector) -> Result<(FockVector, f64)> {
    let norm = v.norm_sqr().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Degenerate(format!("cannot normalize a vector of norm {norm}")));
    }
    let amps = v.amps.iter().map(|c| c / norm).collect();
    Ok((
        FockVector {
            amps,
            normalized: true,
        },
        norm,
    ))
}

/// `⟨a|b⟩` with zero padding.
pub fn overlap(a: &FockVector, b: &FockVector) -> Complex64 {
    a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum()
}

/// `|⟨a|b⟩|² / (‖a‖²‖b‖²)`; equals `|⟨a|b⟩|²` for normalized inputs.
pub fn fidelity(a: &FockVector, b: &FockVector) -> f64 {
    let denom = a.norm_sqr() * b.norm_sqr();
    if denom == 0.0 {
        return 0.0;
    }
    (overlap(a, b).norm_sqr() / denom).clamp(0.0, 1.0)
}

/// `ln n!`, tabulated.
pub(crate) fn ln_factorial(n: usize) -> f64 {
    const TABLE: usize = 8192;
    static CACHE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = CACHE.get_or_init(|| {
        let mut t = Vec::with_capacity(TABLE);
        t.push(0.0);
        for k in 1..TABLE {
            t.push(t[k - 1] + (k as f64).ln());
        }
        t
    });
    if n < TABLE {
        table[n]
    } else {
        table[TABLE - 1] + ((TABLE as u64)..=(n as u64)).map(|k| (k as f64).ln()).sum::<f64>()
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `⟨n,m|B(θ)|i,j⟩`; zero unless `i + j == n + m`.
pub fn bs_element(i: usize, j: usize, n: usize, m: usize, theta: f64) -> Complex64 {
    if i + j != n + m {
        return ZERO;
    }
    let (c, s) = (theta.cos(), theta.sin());
    // (c a† + s b†)^i (−s a† + c b†)^j: take k a† from the first factor and
    // n−k from the second.
    let lo = n.saturating_sub(j);
    let hi = i.min(n);
    let mut total = 0.0;
    for k in lo..=hi {
        let q = n - k;
        let magnitude = (ln_binomial(i, k) + ln_binomial(j, q)).exp();
        let sign = if q % 2 == 1 { -1.0 } else { 1.0 };
        total += sign * magnitude * c.powi((k + j - q) as i32) * s.powi((i - k + q) as i32);
    }
    let norm = 0.5 * (ln_factorial(n) + ln_factorial(m) - ln_factorial(i) - ln_factorial(j));
    Complex64::new(total * norm.exp(), 0.0)
}

/// Couples `a` and `b` on `B(θ)`, projects the second port onto vacuum and
/// returns the normalized output with the projection probability.
///
/// `c_n = Σ_{i+j=n} a_i b_j √(n!/(i!j!)) cosⁱθ (−sinθ)ʲ`, so the output
/// cutoff is exactly `d_a + d_b`.
pub fn couple_and_herald_zero(a: &FockVector, b: &FockVector, theta: f64) -> Result<(FockVector, f64)> {
    let raw = couple_zero_raw(a.amplitudes(), b.amplitudes(), theta);
    let probability: f64 = raw.iter().map(|c| c.norm_sqr()).sum();
    if !(probability > 1e-300) {
        return Err(Error::DegenerateHerald(probability));
    }
    let (out, _) = normalize(&FockVector::from_raw(raw))?;
    Ok((out, probability))
}

/// Unnormalized zero-herald output amplitudes.
pub(crate) fn couple_zero_raw(a: &[Complex64], b: &[Complex64], theta: f64) -> Vec<Complex64> {
    let (c, s) = (theta.cos(), -theta.sin());
    let da = a.len();
    let db = b.len();
    if da == 0 || db == 0 {
        return Vec::new();
    }
    // a_i cⁱ/√i! and b_j sʲ/√j!, combined with √n! per output index, kept in
    // log-magnitude form so large cutoffs do not overflow.
    let scaled = |v: &[Complex64], t: f64| -> Vec<Complex64> {
        v.iter()
            .enumerate()
            .map(|(i, &x)| {
                if x == ZERO {
                    return ZERO;
                }
                let p = if i == 0 { 1.0 } else { t.powi(i as i32) };
                x * p * (-0.5 * ln_factorial(i)).exp()
            })
            .collect()
    };
    let sa = scaled(a, c);
    let sb = scaled(b, s);
    let mut out = vec![ZERO; da + db - 1];
    for (i, &x) in sa.iter().enumerate() {
        if x == ZERO {
            continue;
        }
        for (j, &y) in sb.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    for (n, v) in out.iter_mut().enumerate() {
        *v *= (0.5 * ln_factorial(n)).exp();
    }
    out
}

/// Truncated two-mode beam-splitter unitary `exp(θ(a b† − a† b))`, indexed
/// `i·(cutoff+1) + j` for `|i, j⟩`.
pub fn bs_unitary_oracle(theta: f64, cutoff: usize) -> Result<DMatrix<Complex64>> {
    bs_unitary_oracle_with_phase(theta, 0.0, cutoff)
}

/// Truncated `exp(θ(e^{iφ} a b† − e^{−iφ} a† b))`.
pub fn bs_unitary_oracle_with_phase(theta: f64, phi: f64, cutoff: usize) -> Result<DMatrix<Complex64>> {
    const MAX_CUTOFF: usize = 20;
    if cutoff > MAX_CUTOFF {
        return Err(Error::Capacity {
            what: "beam-splitter oracle cutoff",
            got: cutoff,
            limit: MAX_CUTOFF,
        });
    }
    let k = cutoff + 1;
    let dim = k * k;
    let e = Complex64::from_polar(1.0, phi);
    let mut g = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..k {
        for j in 0..k {
            let col = i * k + j;
            // a b† |i,j⟩ = √i √(j+1) |i−1, j+1⟩
            if i > 0 && j + 1 < k {
                let row = (i - 1) * k + (j + 1);
                g[(row, col)] += e * theta * ((i * (j + 1)) as f64).sqrt();
            }
            // a† b |i,j⟩ = √(i+1) √j |i+1, j−1⟩
            if j > 0 && i + 1 < k {
                let row = (i + 1) * k + (j - 1);
                g[(row, col)] -= e.conj() * theta * (((i + 1) * j) as f64).sqrt();
            }
        }
    }
    Ok(g.exp())
}

/// `exp(G) v` for a sparse generator given as `apply(v, out)` with operator
/// norm at most `norm_bound`. Taylor series over sub-steps of norm ≤ 1/2.
fn expm_action(v: &[Complex64], norm_bound: f64, apply: impl Fn(&[Complex64], &mut [Complex64])) -> Vec<Complex64> {
    let steps = (2.0 * norm_bound).ceil().max(1.0) as usize;
    let scale = 1.0 / steps as f64;
    let mut x = v.to_vec();
    let mut term = vec![ZERO; v.len()];
    let mut next = vec![ZERO; v.len()];
    for _ in 0..steps {
        term.copy_from_slice(&x);
        let mut acc = x.clone();
        for order in 1..60 {
            apply(&term, &mut next);
            let f = scale / order as f64;
            let mut size = 0.0f64;
            for (t, n) in term.iter_mut().zip(&next) {
                *t = n * f;
                size = size.max(t.norm());
            }
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += t;
            }
            if size < 1e-18 {
                break;
            }
        }
        x = acc;
    }
    x
}

/// `S(ζ)|v⟩` with `S(ζ) = exp(½(ζ̄a² − ζa†²))`, `ζ = r e^{iφ}`, in a space
/// truncated at `v.len() − 1` photons.
pub fn apply_squeezer_truncated(v: &[Complex64], r: f64, phi: f64) -> Vec<Complex64> {
    let zeta = Complex64::from_polar(r, phi);
    let k = v.len();
    expm_action(v, r.abs() * k as f64, |x, out| {
        for n in 0..k {
            let mut acc = ZERO;
            if n + 2 < k {
                acc += 0.5 * zeta.conj() * (((n + 1) * (n + 2)) as f64).sqrt() * x[n + 2];
            }
            if n >= 2 {
                acc -= 0.5 * zeta * ((n * (n - 1)) as f64).sqrt() * x[n - 2];
            }
            out[n] = acc;
        }
    })
}

/// `D(α)|v⟩` with `D(α) = exp(αa† − ᾱa)`, truncated like
/// [`apply_squeezer_truncated`].
pub fn apply_displacement_truncated(v: &[Complex64], alpha: Complex64) -> Vec<Complex64> {
    let k = v.len();
    expm_action(v, 2.0 * alpha.norm() * (k as f64).sqrt(), |x, out| {
        for n in 0..k {
            let mut acc = ZERO;
            if n >= 1 {
                acc += alpha * (n as f64).sqrt() * x[n - 1];
            }
            if n + 1 < k {
                acc -= alpha.conj() * ((n + 1) as f64).sqrt() * x[n + 1];
            }
            out[n] = acc;
        }
    })
}

/// A gate for the truncated-Fock reference simulator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OracleGate {
    Squeeze { mode: usize, r: f64, phi: f64 },
    Displace { mode: usize, alpha: Complex64 },
    Phase { mode: usize, phi: f64 },
    Beamsplitter { a: usize, b: usize, theta: f64, phi: f64 },
}

/// Brute-force Fock-basis simulation of a circuit applied to vacuum.
///
/// Each mode's single-mode gates that precede its first beam splitter are
/// applied by exponentiating truncated generators in a large single-mode
/// space; the passive network (beam splitters and phases) is then applied
/// exactly on the product state restricted to at most `keep` photons per
/// mode. Squeezers or displacements after a beam splitter are rejected.
///
/// Returns the tensor indexed by `Σ n_i (keep+1)^{l−1−i}`; entries with
/// `Σ n_i ≤ keep` are exact.
pub fn simulate_truncated(modes: usize, gates: &[OracleGate], keep: usize) -> Result<Vec<Complex64>> {
    let mut prep: Vec<Vec<OracleGate>> = vec![Vec::new(); modes];
    let mut passive_started = vec![false; modes];
    let mut passive = Vec::new();
    for g in gates {
        match *g {
            OracleGate::Beamsplitter { a, b, .. } => {
                if a >= modes || b >= modes || a == b {
                    return Err(Error::Contract(format!("bad beam-splitter modes ({a}, {b})")));
                }
                passive_started[a] = true;
                passive_started[b] = true;
                passive.push(*g);
            }
            OracleGate::Phase { mode, .. } if mode < modes && passive_started[mode] => passive.push(*g),
            OracleGate::Squeeze { mode, .. } | OracleGate::Displace { mode, .. } | OracleGate::Phase { mode, .. } => {
                if mode >= modes {
                    return Err(Error::Contract(format!("mode {mode} out of range")));
                }
                if passive_started[mode] {
                    return Err(Error::Contract(
                        "oracle supports squeezers and displacements only before the passive network".into(),
                    ));
                }
                prep[mode].push(*g);
            }
        }
    }

    let k = keep + 1;
    let singles: Vec<Vec<Complex64>> = prep
        .iter()
        .map(|ops| {
            let internal = internal_cutoff(ops, keep);
            let mut v = vec![ZERO; internal + 1];
            v[0] = Complex64::new(1.0, 0.0);
            for g in ops {
                v = match *g {
                    OracleGate::Squeeze { r, phi, .. } => apply_squeezer_truncated(&v, r, phi),
                    OracleGate::Displace { alpha, .. } => apply_displacement_truncated(&v, alpha),
                    OracleGate::Phase { phi, .. } => v
                        .iter()
                        .enumerate()
                        .map(|(n, c)| c * Complex64::from_polar(1.0, phi * n as f64))
                        .collect(),
                    OracleGate::Beamsplitter { .. } => unreachable!(),
                };
            }
            v.truncate(k);
            v
        })
        .collect();

    let total = k.pow(modes as u32);
    let mut state = vec![ZERO; total];
    for (idx, slot) in state.iter_mut().enumerate() {
        let mut rem = idx;
        let mut amp = Complex64::new(1.0, 0.0);
        for m in (0..modes).rev() {
            amp *= singles[m][rem % k];
            rem /= k;
        }
        *slot = amp;
    }

    let stride = |m: usize| k.pow((modes - 1 - m) as u32);
    for g in &passive {
        match *g {
            OracleGate::Phase { mode, phi } => {
                let s = stride(mode);
                for (idx, c) in state.iter_mut().enumerate() {
                    let n = (idx / s) % k;
                    *c *= Complex64::from_polar(1.0, phi * n as f64);
                }
            }
            OracleGate::Beamsplitter { a, b, theta, phi } => {
                let u = bs_unitary_oracle_with_phase(theta, phi, keep)?;
                let (sa, sb) = (stride(a), stride(b));
                let mut next = vec![ZERO; total];
                for base in 0..total {
                    if (base / sa) % k != 0 || (base / sb) % k != 0 {
                        continue;
                    }
                    let mut slice = vec![ZERO; k * k];
                    for i in 0..k {
                        for j in 0..k {
                            slice[i * k + j] = state[base + i * sa + j * sb];
                        }
                    }
                    for row in 0..k * k {
                        let mut acc = ZERO;
                        for col in 0..k * k {
                            acc += u[(row, col)] * slice[col];
                        }
                        next[base + (row / k) * sa + (row % k) * sb] = acc;
                    }
                }
                state = next;
            }
            _ => unreachable!(),
        }
    }
    Ok(state)
}

/// Single-mode cutoff large enough that truncating the generators does not
/// disturb the lowest `keep + 1` amplitudes beyond ~1e-13.
fn internal_cutoff(ops: &[OracleGate], keep: usize) -> usize {
    let mut r_total = 0.0f64;
    let mut alpha_total = 0.0f64;
    for g in ops {
        match *g {
            OracleGate::Squeeze { r, .. } => r_total += r.abs(),
            OracleGate::Displace { alpha, .. } => alpha_total += alpha.norm() * (2.0 * r_total).exp(),
            _ => {}
        }
    }
    let squeeze_tail = if r_total > 0.0 {
        (2.0 * 30.0 / -(r_total.tanh().ln())).ceil() as usize
    } else {
        0
    };
    let disp_tail = (alpha_total * alpha_total * 4.0 + 20.0 * alpha_total + 40.0).ceil() as usize;
    (keep + 40 + squeeze_tail + disp_tail).min(6000)
}

/// Wigner function of a pure state on a rectangular grid.
///
/// Returns `n_p` rows of `n_q` values: row `r` is `p = p_min + r·Δp`, column
/// `c` is `q = q_min + c·Δq`. Normalization is `∫W dq dp = 1`.
pub fn wigner_grid(
    v: &FockVector,
    q_range: (f64, f64),
    p_range: (f64, f64),
    resolution: (usize, usize),
) -> Result<Vec<Vec<f64>>> {
    let (nq, np) = resolution;
    if nq == 0 || np == 0 {
        return Err(Error::Contract("Wigner grid resolution must be positive".into()));
    }
    let (state, _) = normalize(v)?;
    let step = |range: (f64, f64), n: usize| if n > 1 { (range.1 - range.0) / (n - 1) as f64 } else { 0.0 };
    let (dq, dp) = (step(q_range, nq), step(p_range, np));
    let rows = (0..np)
        .into_par_iter()
        .map(|r| {
            let p = p_range.0 + r as f64 * dp;
            (0..nq)
                .map(|cidx| wigner_point(state.amplitudes(), q_range.0 + cidx as f64 * dq, p))
                .collect()
        })
        .collect();
    Ok(rows)
}

/// `W(q, p) = Σ_{m,n} c_m c̄_n W_{mn}(q, p)` with, for `m ≥ n`,
/// `W_{mn} = (−1)ⁿ/π √(n!/m!) (√2 (q − ip))^{m−n} e^{−(q²+p²)} L_n^{(m−n)}(2(q²+p²))`.
pub fn wigner_point(c: &[Complex64], q: f64, p: f64) -> f64 {
    let rho2 = q * q + p * p;
    let x = 2.0 * rho2;
    let base = (-rho2).exp() / std::f64::consts::PI;
    let radius = (2.0 * rho2).sqrt();
    let angle = -p.atan2(q);
    let d = c.len();
    let mut total = 0.0;
    let mut lag = vec![0.0; d + 1];
    for k in 0..d {
        // L_n^{(k)}(x) for n = 0..d−k.
        let len = d - k;
        lag[0] = 1.0;
        if len > 1 {
            lag[1] = 1.0 + k as f64 - x;
        }
        for n in 1..len.saturating_sub(1) {
            lag[n + 1] = ((2 * n + 1 + k) as f64 - x) * lag[n] - (n + k) as f64 * lag[n - 1];
            lag[n + 1] /= (n + 1) as f64;
        }
        let phase = Complex64::from_polar(1.0, angle * k as f64);
        for n in 0..len {
            let m = n + k;
            let coef = c[m] * c[n].conj();
            if coef == ZERO {
                continue;
            }
            let mag = if k == 0 {
                1.0
            } else if radius == 0.0 {
                0.0
            } else {
                (0.5 * (ln_factorial(n) - ln_factorial(m)) + k as f64 * radius.ln()).exp()
            };
            let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
            let w = sign * mag * lag[n] * base;
            if k == 0 {
                total += coef.re * w;
            } else {
                total += 2.0 * (coef * phase).re * w;
            }
        }
    }
    total
}

/// CSV rendering with the `# q_min q_max p_min p_max n_q n_p` header.
pub fn wigner_csv(grid: &[Vec<f64>], q_range: (f64, f64), p_range: (f64, f64)) -> String {
    let nq = grid.first().map_or(0, |r| r.len());
    let mut out = format!(
        "# {} {} {} {} {} {}\n",
        q_range.0,
        q_range.1,
        p_range.0,
        p_range.1,
        nq,
        grid.len()
    );
    for row in grid {
        let cells: Vec<String> = row.iter().map(|w| format!("{w:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
