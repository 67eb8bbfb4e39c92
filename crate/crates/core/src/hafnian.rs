//! Exact loop hafnians.
//!
//! The loop hafnian of a symmetric `n × n` matrix sums, over every way of
//! covering the vertices `0..n` by disjoint edges and loops, the product of
//! the covered entries (`A[i][j]` for an edge, `A[i][i]` for a loop). Fock
//! amplitudes of Gaussian states are loop hafnians of reduced matrices, see
//! [`reduce_matrix`].
//!
//! [`loop_hafnian`] uses the power-trace / inclusion–exclusion formula over
//! the `2^{n/2}` subsets of vertex pairs. Each subset costs one Hessenberg
//! reduction and characteristic polynomial, so the total is
//! `O(n³ 2^{n/2})`. In double precision the relative error against
//! [`loop_hafnian_bruteforce`] stays below `1e-9` for well-scaled inputs up to
//! dimension 16.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension accepted by [`loop_hafnian`].
pub const LOOP_HAFNIAN_MAX_DIM: usize = 64;

/// Largest dimension accepted by [`loop_hafnian_bruteforce`].
pub const BRUTEFORCE_MAX_DIM: usize = 12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A complex matrix with `entry(i, j) == entry(j, i)`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricComplexMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl SymmetricComplexMatrix {
    /// Builds a matrix from row-major entries. Symmetry is checked exactly.
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Contract(format!(
                "expected {} entries for dimension {dim}, got {}",
                dim * dim,
                entries.len()
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if entries[i * dim + j] != entries[j * dim + i] {
                    return Err(Error::Contract(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { dim, entries })
    }

    /// Builds a matrix from the upper triangle `f(i, j)` with `i <= j`.
    pub fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                entries[i * dim + j] = v;
                entries[j * dim + i] = v;
            }
        }
        Self { dim, entries }
    }

    pub fn empty() -> Self {
        Self {
            dim: 0,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Returns `s · self`.
    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&v| v * s).collect(),
        }
    }
}

/// Per-row repetition counts used by [`reduce_matrix`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionVector {
    counts: Vec<usize>,
}

impl RepetitionVector {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Dimension of the reduced matrix, `Σ counts`.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Repeats row/column `i` of `m` `reps[i]` times and writes the repeated
/// `diagonal_override` values on the diagonal of the result.
pub fn reduce_matrix(
    m: &SymmetricComplexMatrix,
    reps: &RepetitionVector,
    diagonal_override: &[Complex64],
) -> Result<SymmetricComplexMatrix> {
    if reps.len() != m.dim() || diagonal_override.len() != m.dim() {
        return Err(Error::Contract(format!(
            "reduce_matrix: matrix dimension {}, {} repetition counts, {} diagonal values",
            m.dim(),
            reps.len(),
            diagonal_override.len()
        )));
    }
    let index: Vec<usize> = reps
        .counts()
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
        .collect();
    Ok(SymmetricComplexMatrix::from_upper(index.len(), |a, b| {
        if a == b {
            diagonal_override[index[a]]
        } else {
            m.get(index[a], index[b])
        }
    }))
}

/// Reference loop hafnian by direct enumeration of all matchings with loops.
pub fn loop_hafnian_bruteforce(m: &SymmetricComplexMatrix) -> Result<Complex64> {
    if m.dim() > BRUTEFORCE_MAX_DIM {
        return Err(Error::Capacity {
            what: "brute-force loop hafnian dimension",
            got: m.dim(),
            limit: BRUTEFORCE_MAX_DIM,
        });
    }
    fn rec(m: &SymmetricComplexMatrix, mask: u32) -> Complex64 {
        if mask == 0 {
            return ONE;
        }
        let i = mask.trailing_zeros() as usize;
        let rest = mask & !(1 << i);
        let mut total = m.get(i, i) * rec(m, rest);
        let mut others = rest;
        while others != 0 {
            let j = others.trailing_zeros() as usize;
            others &= others - 1;
            total += m.get(i, j) * rec(m, rest & !(1 << j));
        }
        total
    }
    let full = if m.dim() == 0 { 0 } else { (1u32 << m.dim()) - 1 };
    Ok(rec(m, full))
}

/// Exact loop hafnian.
///
/// Vertices are grouped into pairs `{2i, 2i+1}` (an odd dimension is padded
/// with an isolated vertex carrying a unit loop). For every subset `Z` of
/// pairs, with `B = A₀[Z] X` (`A₀` is `A` with zeroed diagonal, `X` swaps the
/// members of each pair) and `v` the diagonal of `A` on `Z`,
///
/// ```text
/// lhaf(A) = Σ_Z (-1)^{k-|Z|} [λ^k] exp( Σ_j ( tr(B^j)/(2j) + (Xv)ᵀ B^{j-1} v / 2 ) λ^j )
/// ```
///
/// where `k` is the number of pairs. Traces come from the characteristic
/// polynomial via Newton's identities.
pub fn loop_hafnian(m: &SymmetricComplexMatrix) -> Result<Complex64> {
    let n = m.dim();
    if n > LOOP_HAFNIAN_MAX_DIM {
        return Err(Error::Capacity {
            what: "loop hafnian dimension",
            got: n,
            limit: LOOP_HAFNIAN_MAX_DIM,
        });
    }
    if n == 0 {
        return Ok(ONE);
    }
    let padded = n + n % 2;
    let mut a = vec![ZERO; padded * padded];
    let mut diag = vec![ONE; padded];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[i * padded + j] = m.get(i, j);
            }
        }
        diag[i] = m.get(i, i);
    }
    let pairs = padded / 2;
    let mut ws = Workspace::new(padded, pairs);
    let mut total = ZERO;
    for mask in 0u64..(1u64 << pairs) {
        let chosen = mask.count_ones() as usize;
        let term = ws.subset_term(&a, &diag, padded, pairs, mask);
        if (pairs - chosen).is_multiple_of(2) {
            total += term;
        } else {
            total -= term;
        }
    }
    Ok(total)
}

/// Scratch buffers reused across subsets.
struct Workspace {
    pos: Vec<usize>,
    b: Vec<Complex64>,
    u: Vec<Complex64>,
    bu: Vec<Complex64>,
    v: Vec<Complex64>,
    w: Vec<Complex64>,
    hh: Vec<Complex64>,
    polys: Vec<Vec<Complex64>>,
    traces: Vec<Complex64>,
    loops: Vec<Complex64>,
    g: Vec<Complex64>,
    e: Vec<Complex64>,
}

impl Workspace {
    fn new(n: usize, pairs: usize) -> Self {
        Self {
            pos: Vec::with_capacity(n),
            b: vec![ZERO; n * n],
            u: vec![ZERO; n],
            bu: vec![ZERO; n],
            v: vec![ZERO; n],
            w: vec![ZERO; n],
            hh: vec![ZERO; n],
            polys: (0..=n).map(|_| Vec::with_capacity(n + 1)).collect(),
            traces: vec![ZERO; pairs + 1],
            loops: vec![ZERO; pairs + 1],
            g: vec![ZERO; pairs + 1],
            e: vec![ZERO; pairs + 1],
        }
    }

    fn subset_term(
        &mut self,
        a: &[Complex64],
        diag: &[Complex64],
        n: usize,
        pairs: usize,
        mask: u64,
    ) -> Complex64 {
        self.pos.clear();
        for p in 0..pairs {
            if mask & (1 << p) != 0 {
                self.pos.push(2 * p);
                self.pos.push(2 * p + 1);
            }
        }
        let z = self.pos.len();
        if z == 0 {
            return if pairs == 0 { ONE } else { ZERO };
        }
        for i in 0..z {
            let pi = self.pos[i];
            for j in 0..z {
                self.b[i * z + j] = a[pi * n + (self.pos[j] ^ 1)];
            }
            self.v[i] = diag[pi];
            self.w[i] = diag[pi ^ 1];
        }

        // Loop contributions (Xv)ᵀ B^{j-1} v for j = 1..=pairs.
        self.u[..z].copy_from_slice(&self.v[..z]);
        for j in 1..=pairs {
            self.loops[j] = (0..z).map(|i| self.w[i] * self.u[i]).sum();
            if j < pairs {
                for i in 0..z {
                    let row = &self.b[i * z..(i + 1) * z];
                    self.bu[i] = row.iter().zip(&self.u[..z]).map(|(x, y)| x * y).sum();
                }
                self.u[..z].copy_from_slice(&self.bu[..z]);
            }
        }

        power_traces(&mut self.b[..z * z], z, pairs, &mut self.hh, &mut self.polys, &mut self.traces);

        for j in 1..=pairs {
            self.g[j] = self.traces[j] / (2.0 * j as f64) + self.loops[j] * 0.5;
        }
        // Coefficients of exp(Σ g_j λ^j): t e_t = Σ_j j g_j e_{t-j}.
        self.e[0] = ONE;
        for t in 1..=pairs {
            let mut acc = ZERO;
            for j in 1..=t {
                acc += self.g[j] * (j as f64) * self.e[t - j];
            }
            self.e[t] = acc / t as f64;
        }
        self.e[pairs]
    }
}

/// Writes `tr(M^j)` for `j = 1..=count` into `out[j]`. `m` is destroyed.
fn power_traces(
    m: &mut [Complex64],
    n: usize,
    count: usize,
    scratch: &mut [Complex64],
    polys: &mut [Vec<Complex64>],
    out: &mut [Complex64],
) {
    hessenberg(m, n, scratch);
    let charpoly = hessenberg_charpoly(m, n, polys);
    // det(xI - M) = x^n + c_1 x^{n-1} + ... + c_n, so c_j = charpoly[n - j].
    let c = |j: usize| if j <= n { charpoly[n - j] } else { ZERO };
    for j in 1..=count {
        let mut acc = c(j) * j as f64;
        for i in 1..j {
            acc += c(i) * out[j - i];
        }
        out[j] = -acc;
    }
}

/// In-place Householder reduction to upper Hessenberg form (row-major).
fn hessenberg(a: &mut [Complex64], n: usize, v: &mut [Complex64]) {
    if n < 3 {
        return;
    }
    for col in 0..n - 2 {
        let len = n - col - 1;
        let mut norm2 = 0.0;
        for i in 0..len {
            let x = a[(col + 1 + i) * n + col];
            v[i] = x;
            norm2 += x.norm_sqr();
        }
        let tail: f64 = (1..len).map(|i| v[i].norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let norm = norm2.sqrt();
        let x0 = v[0];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        v[0] = x0 + phase * norm;
        let vn2: f64 = (0..len).map(|i| v[i].norm_sqr()).sum();
        let scale = 2.0 / vn2;
        // Left: rows col+1..n, columns col..n.
        for j in col..n {
            let mut s = ZERO;
            for i in 0..len {
                s += v[i].conj() * a[(col + 1 + i) * n + j];
            }
            s *= scale;
            for i in 0..len {
                a[(col + 1 + i) * n + j] -= v[i] * s;
            }
        }
        // Right: all rows, columns col+1..n.
        for r in 0..n {
            let row = &mut a[r * n + col + 1..r * n + n];
            let mut s = ZERO;
            for k in 0..len {
                s += row[k] * v[k];
            }
            s *= scale;
            for k in 0..len {
                row[k] -= s * v[k].conj();
            }
        }
    }
}

/// Ascending coefficients of `det(xI - H)` for upper Hessenberg `H`.
fn hessenberg_charpoly<'a>(h: &[Complex64], n: usize, polys: &'a mut [Vec<Complex64>]) -> &'a [Complex64] {
    polys[0].clear();
    polys[0].push(ONE);
    for i in 0..n {
        let (done, rest) = polys.split_at_mut(i + 1);
        let next = &mut rest[0];
        next.clear();
        next.resize(i + 2, ZERO);
        let hii = h[i * n + i];
        // (x - h_ii) p_i
        for (t, &coef) in done[i].iter().enumerate() {
            next[t + 1] += coef;
            next[t] -= hii * coef;
        }
        let mut prod = ONE;
        for mm in 1..=i {
            prod *= h[(i - mm + 1) * n + (i - mm)];
            let factor = h[(i - mm) * n + i] * prod;
            if factor == ZERO {
                continue;
            }
            for (t, &coef) in done[i - mm].iter().enumerate() {
                next[t] -= factor * coef;
            }
        }
    }
    &polys[n]
}

/// Inputs to the loop-hafnian cost model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Number of modes `l`.
    pub modes: usize,
    /// Arithmetic mean of `n_i + 1`.
    pub arithmetic_mean: f64,
    /// Geometric mean of `n_i + 1`.
    pub geometric_mean: f64,
    /// Truncation dimension `d`.
    pub truncation: usize,
}

impl CostModel {
    /// Builds the model from a per-mode photon pattern.
    pub fn from_pattern(pattern: &[usize], truncation: usize) -> Result<Self> {
        if pattern.is_empty() || truncation == 0 {
            return Err(Error::Contract(
                "cost model needs at least one mode and d >= 1".into(),
            ));
        }
        let l = pattern.len() as f64;
        let arithmetic_mean = pattern.iter().map(|&n| n as f64 + 1.0).sum::<f64>() / l;
        let geometric_mean = (pattern.iter().map(|&n| (n as f64 + 1.0).ln()).sum::<f64>() / l).exp();
        Ok(Self {
            modes: pattern.len(),
            arithmetic_mean,
            geometric_mean,
            truncation,
        })
    }
}

/// Step counts `(l·A_p·G_p^l, l²·d²·d^l)`; callers take the smaller one.
pub fn predicted_cost(c: &CostModel) -> (f64, f64) {
    let l = c.modes as f64;
    let d = c.truncation as f64;
    let pattern = l * c.arithmetic_mean * c.geometric_mean.powf(l);
    let truncation = l * l * d * d * d.powf(l);
    (pattern, truncation)
}

/// One row of a hafnian timing sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    /// Reduced-matrix dimension `D = Σ pattern`.
    pub dim: usize,
    pub modes: usize,
    pub pattern: Vec<usize>,
    /// `min` of the two cost-model step counts.
    pub predicted_steps: f64,
    /// Best-of-repeats wall time for one loop-hafnian evaluation.
    pub wall_time: Duration,
}

/// Times [`loop_hafnian`] on deterministic inputs for each `(l, pattern)`.
///
/// The base `l × l` matrix is drawn from a fixed-seed generator with entries
/// of modulus below `1/2`, reduced with `pattern`, and timed as the minimum
/// over repeated evaluations (at least `min_repeats`, and enough to cover
/// roughly 20 ms per size).
pub fn benchmark_hafnian(sizes: &[(usize, Vec<usize>)], min_repeats: usize) -> Result<Vec<BenchmarkRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for (l, pattern) in sizes {
        let l = *l;
        if pattern.len() != l {
            return Err(Error::Contract(format!(
                "pattern {pattern:?} does not have {l} entries"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + l as u64);
        let base = SymmetricComplexMatrix::from_upper(l, |_, _| {
            Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
        });
        let gamma: Vec<Complex64> = (0..l)
            .map(|_| Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
            .collect();
        let reduced = reduce_matrix(&base, &RepetitionVector::new(pattern.clone()), &gamma)?;
        let dim = reduced.dim();
        if dim > LOOP_HAFNIAN_MAX_DIM {
            return Err(Error::Capacity {
                what: "benchmark dimension",
                got: dim,
                limit: LOOP_HAFNIAN_MAX_DIM,
            });
        }

        let mut best = Duration::MAX;
        let mut elapsed_total = Duration::ZERO;
        let mut repeats = 0;
        while repeats < min_repeats.max(1) || elapsed_total < Duration::from_millis(20) {
            let start = Instant::now();
            let value = loop_hafnian(&reduced)?;
            let dt = start.elapsed();
            std::hint::black_box(value);
            best = best.min(dt);
            elapsed_total += dt;
            repeats += 1;
            if repeats > 100_000 {
                break;
            }
        }

        let truncation = pattern.iter().copied().max().unwrap_or(0) + 1;
        let model = CostModel::from_pattern(pattern, truncation)?;
        let (p, t) = predicted_cost(&model);
        rows.push(BenchmarkRow {
            dim,
            modes: l,
            pattern: pattern.clone(),
            predicted_steps: p.min(t),
            wall_time: best,
        });
    }
    Ok(rows)
}

/// Renders benchmark rows as CSV with header `D,l,pattern,predicted_steps,wall_time_ns`.
/// Patterns are written space-separated.
pub fn benchmark_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = String::from("D,l,pattern,predicted_steps,wall_time_ns\n");
    for r in rows {
        let pattern: Vec<String> = r.pattern.iter().map(|n| n.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{:.6e},{}\n",
            r.dim,
            r.modes,
            pattern.join(" "),
            r.predicted_steps,
            r.wall_time.as_nanos()
        ));
    }
    out
}

/// Least-squares slope of `log2(wall_time / D³)` against `D`.
pub fn corrected_log2_slope(rows: &[BenchmarkRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            let d = r.dim as f64;
            let t = r.wall_time.as_secs_f64().max(1e-12);
            (d, (t / d.powi(3)).log2())
        })
        .collect();
    least_squares_slope(&pts)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// The sweep used by the CLI and the complexity-trend check: for each even
/// `D` in `range`, `D/2` modes with two photons each.
pub fn default_sweep(range: impl IntoIterator<Item = usize>) -> Vec<(usize, Vec<usize>)> {
    range
        .into_iter()
        .map(|d| {
            let l = (d / 2).max(1);
            let mut pattern = vec![2; l];
            if d % 2 == 1 {
                pattern.push(1);
            }
            (pattern.len(), pattern)
        })
        .collect()
}
