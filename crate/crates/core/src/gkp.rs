//! Approximate GKP codewords in the Fock basis.
//!
//! The codeword uses the symmetric convention: a comb of Gaussian peaks of
//! width `Δ` under a Gaussian envelope of width `1/Δ`,
//! `ψ(q) ∝ Σ_s exp(−Δ² q_s²/2) exp(−(q − q_s)²/(2Δ²))` with peaks
//! `q_s = 2s√π` (logical 0) or `(2s+1)√π` (logical 1), and
//! `Δ² = 10^(−dB/10)`.
//!
//! Each peak is a displaced squeezed vacuum, whose Fock coefficients obey a
//! three-term recurrence; summing peaks gives the codeword without
//! quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::FockVector;

/// Peaks whose envelope weight falls below this are dropped from the comb.
const ENVELOPE_FLOOR: f64 = 1e-16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GkpParams {
    pub squeezing_db: f64,
    pub logical: u8,
}

impl GkpParams {
    pub fn new(squeezing_db: f64, logical: u8) -> Result<Self> {
        if !squeezing_db.is_finite() {
            return Err(Error::Contract(format!("squeezing level must be finite, got {squeezing_db}")));
        }
        if logical > 1 {
            return Err(Error::Contract(format!("logical codeword must be 0 or 1, got {logical}")));
        }
        Ok(Self { squeezing_db, logical })
    }

    /// Peak width `Δ`.
    pub fn delta(&self) -> f64 {
        db_to_delta(self.squeezing_db)
    }
}

/// `Δ = 10^(−dB/20)`.
pub fn db_to_delta(db: f64) -> f64 {
    10f64.powf(-db / 20.0)
}

/// `dB = −20 log₁₀ Δ`.
pub fn delta_to_db(delta: f64) -> f64 {
    -20.0 * delta.log10()
}

/// `dB → Δ → dB`.
pub fn db_delta_roundtrip(db: f64) -> f64 {
    delta_to_db(db_to_delta(db))
}

/// Unnormalized codeword coefficients `g_0..g_n`.
fn raw_coefficients(p: &GkpParams, n_max: usize) -> Vec<f64> {
    let d2 = p.delta().powi(2);
    let a2 = (d2 - 1.0) / (2.0 * (d2 + 1.0));
    let spacing = 2.0 * PI.sqrt();
    let offset = if p.logical == 1 { PI.sqrt() } else { 0.0 };
    let q_limit = (-2.0 * ENVELOPE_FLOOR.ln() / d2).sqrt();
    let s_max = (q_limit / spacing).ceil() as i64 + 1;

    let peaks: Vec<f64> = (-s_max..=s_max)
        .map(|s| s as f64 * spacing + offset)
        .filter(|q0| (-d2 * q0 * q0 / 2.0).exp() >= ENVELOPE_FLOOR)
        .collect();
    peaks
        .par_iter()
        .map(|&q0| {
            // ⟨k|peak⟩ for a squeezed vacuum displaced to q0, times its
            // envelope weight. The recurrence runs on rescaled values with
            // the logarithm of the scale carried separately.
            const RESCALE: f64 = 1e150;
            let b1 = std::f64::consts::SQRT_2 * q0 / (d2 + 1.0);
            let log_w = -d2 * q0 * q0 / 2.0 - q0 * q0 / (2.0 * (d2 + 1.0));
            let mut out = vec![0.0; n_max + 1];
            let (mut prev, mut cur) = (0.0, 1.0);
            let mut log_scale = log_w;
            out[0] = log_w.exp();
            for k in 0..n_max {
                let next = (b1 * cur + 2.0 * a2 * (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
                prev = cur;
                cur = next;
                if cur.abs() > RESCALE {
                    prev /= RESCALE;
                    cur /= RESCALE;
                    log_scale += RESCALE.ln();
                }
                out[k + 1] = cur * log_scale.exp();
            }
            out
        })
        .collect::<Vec<_>>()
        .into_iter()
        // Summed in peak order so results do not depend on thread timing.
        .fold(vec![0.0; n_max + 1], |mut acc, c| {
            for (a, x) in acc.iter_mut().zip(c) {
                *a += x;
            }
            acc
        })
}

/// Normalized truncation of the codeword to `n ≤ n_max`.
pub fn gkp_coefficients(p: &GkpParams, n_max: usize) -> Result<FockVector> {
    let mut g = raw_coefficients(p, n_max);
    if p.logical == 0 {
        for x in g.iter_mut().skip(1).step_by(2) {
            *x = 0.0;
        }
    }
    FockVector::normalized(g.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
}

/// Cutoff standing in for the untruncated codeword.
pub fn reference_cutoff(n_max: usize) -> usize {
    (4 * n_max).max(256)
}

/// `|⟨0̄_{n_max}|0̄⟩|²`: the weight of the reference codeword on
/// `n ≤ n_max`.
pub fn truncation_fidelity(p: &GkpParams, n_max: usize) -> Result<f64> {
    let reference = gkp_coefficients(p, reference_cutoff(n_max))?;
    Ok(reference
        .amplitudes()
        .iter()
        .take(n_max + 1)
        .map(|c| c.norm_sqr())
        .sum::<f64>()
        .min(1.0))
}

/// Smallest `n` with `truncation_fidelity ≥ threshold`, searched up to
/// `limit`.
pub fn photon_cutoff_for(p: &GkpParams, threshold: f64, limit: usize) -> Result<Option<usize>> {
    let reference = gkp_coefficients(p, reference_cutoff(limit))?;
    let mut mass = 0.0;
    for (n, c) in reference.amplitudes().iter().enumerate().take(limit + 1) {
        mass += c.norm_sqr();
        if mass >= threshold {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fidelity;

    fn p(db: f64) -> GkpParams {
        GkpParams::new(db, 0).unwrap()
    }

    /// `⟨n|ψ⟩` by trapezoidal quadrature of the position wavefunction
    /// against Hermite functions from their three-term recursion.
    fn quadrature_coefficients(params: &GkpParams, n_max: usize) -> Vec<f64> {
        let d = params.delta();
        let d2 = d * d;
        let offset = if params.logical == 1 { PI.sqrt() } else { 0.0 };
        let psi = |q: f64| -> f64 {
            (-40..=40)
                .map(|s| {
                    let q0 = 2.0 * s as f64 * PI.sqrt() + offset;
                    (-d2 * q0 * q0 / 2.0).exp() * (-(q - q0).powi(2) / (2.0 * d2)).exp()
                })
                .sum()
        };
        let (lo, hi, steps) = (-30.0, 30.0, 120_000);
        let h = (hi - lo) / steps as f64;
        let mut g = vec![0.0; n_max + 1];
        for i in 0..=steps {
            let q = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let f = psi(q) * w * h;
            let mut prev = 0.0;
            let mut cur = PI.powf(-0.25) * (-q * q / 2.0).exp();
            for (n, gn) in g.iter_mut().enumerate() {
                *gn += f * cur;
                let next = (2.0f64 / (n + 1) as f64).sqrt() * q * cur - (n as f64 / (n + 1) as f64).sqrt() * prev;
                prev = cur;
                cur = next;
            }
        }
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        g.iter().map(|x| x / norm).collect()
    }

    #[test]
    fn matches_quadrature_oracle() {
        for (db, logical) in [(10.0, 0), (7.0, 0), (10.0, 1), (4.0, 1)] {
            let params = GkpParams::new(db, logical).unwrap();
            let n = 60;
            let ours = gkp_coefficients(&params, n).unwrap();
            let oracle = quadrature_coefficients(&params, n);
            for (k, want) in oracle.iter().enumerate() {
                assert!((ours.get(k).re - want).abs() < 1e-7, "{db} dB logical {logical} n={k}: {} vs {want}", ours.get(k).re);
            }
        }
    }

    #[test]
    fn paper_truncation_anchors() {
        let ten = p(10.0);
        let f24 = truncation_fidelity(&ten, 24).unwrap();
        let f32 = truncation_fidelity(&ten, 32).unwrap();
        let f42 = truncation_fidelity(&ten, 42).unwrap();
        assert!((0.985..0.995).contains(&f24), "{f24}");
        assert!((0.9985..0.9995).contains(&f32), "{f32}");
        assert!((0.99985..0.99995).contains(&f42), "{f42}");
    }

    #[test]
    fn weak_squeezing_approaches_vacuum() {
        let v = gkp_coefficients(&p(0.0), 10).unwrap();
        assert!(fidelity(&v, &FockVector::vacuum()) > 0.9);
    }

    #[test]
    fn logical_zero_has_even_support() {
        for db in [3.0, 7.0, 10.0, 13.0] {
            let raw = raw_coefficients(&p(db), 80);
            let scale = raw.iter().map(|x| x.abs()).fold(0.0, f64::max);
            for x in raw.iter().skip(1).step_by(2) {
                assert!(x.abs() < 1e-12 * scale);
            }
            let v = gkp_coefficients(&p(db), 80).unwrap();
            assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn logical_one_is_orthogonal_to_zero() {
        let zero = gkp_coefficients(&p(10.0), 200).unwrap();
        let one = gkp_coefficients(&GkpParams::new(10.0, 1).unwrap(), 200).unwrap();
        assert!(fidelity(&zero, &one) < 1e-3);
    }

    #[test]
    fn db_delta_cases() {
        assert!((db_to_delta(10.0).powi(2) - 0.1).abs() < 1e-15);
        assert_eq!(db_to_delta(0.0), 1.0);
        for db in [0.0, 3.5, 7.0, 10.0, 15.2] {
            assert!((db_delta_roundtrip(db) - db).abs() < 1e-12);
        }
        assert!(GkpParams::new(f64::NAN, 0).is_err());
        assert!(GkpParams::new(10.0, 2).is_err());
    }

    #[test]
    fn truncation_fidelity_monotone_in_cutoff() {
        let params = p(10.0);
        let mut last = 0.0;
        for n in 0..60 {
            let f = truncation_fidelity(&params, n).unwrap();
            assert!(f + 1e-14 >= last, "n={n}: {f} < {last}");
            last = f;
        }
        assert!(last > 0.99999);
    }

    #[test]
    fn sharper_combs_need_more_photons() {
        for n in [16, 24, 32] {
            let mut last = 1.0;
            for db in [6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0] {
                let f = truncation_fidelity(&p(db), n).unwrap();
                assert!(f <= last + 1e-12, "n={n} dB={db}");
                last = f;
            }
        }
    }

    #[test]
    fn photon_cutoff_search() {
        assert_eq!(photon_cutoff_for(&p(10.0), 0.99, 100).unwrap(), Some(24));
        assert_eq!(photon_cutoff_for(&p(10.0), 0.99, 10).unwrap(), None);
    }
}
