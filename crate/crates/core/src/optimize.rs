//! Bounded multistart maximization.
//!
//! Each restart runs a local search from its own starting point: restart 0
//! starts at the box center (or the first caller-supplied start) and the
//! rest are drawn uniformly from a ChaCha stream keyed by `(seed, restart)`,
//! so results do not depend on how many restarts run or in what order.
//! Within a restart, a first descent is followed by perturb-and-descend
//! rounds around the incumbent and a final tight refinement.
//! Periodic parameters are wrapped into their interval before every
//! evaluation; the others are clamped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interval for one parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub periodic: bool,
}

impl Bound {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi, periodic: false }
    }

    pub fn periodic(lo: f64, hi: f64) -> Self {
        Self { lo, hi, periodic: true }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Maps `x` into the interval.
    pub fn project(&self, x: f64) -> f64 {
        if self.periodic {
            let w = self.width();
            let y = self.lo + (x - self.lo).rem_euclid(w);
            if y >= self.hi {
                self.lo
            } else {
                y
            }
        } else {
            x.clamp(self.lo, self.hi)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalMethod {
    /// Derivative-free simplex descent.
    #[default]
    NelderMead,
    /// BFGS on central finite differences.
    QuasiNewton,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Objective evaluations allowed per restart.
    pub max_evals: usize,
    /// Convergence threshold on the spread of objective values.
    pub tolerance: f64,
    pub seed: u64,
    pub method: LocalMethod,
    /// Follow a simplex run with a quasi-Newton refinement.
    pub polish: bool,
    /// Perturb-and-descend rounds after the first descent of each restart.
    pub hops: usize,
    /// Perturbation size as a fraction of each interval width.
    pub hop_size: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<Bound>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_evals: 4000,
            tolerance: 1e-12,
            seed: 0,
            method: LocalMethod::NelderMead,
            polish: true,
            hops: 20,
            hop_size: 0.1,
            bounds: Vec::new(),
        }
    }
}

impl OptimizerConfig {
    pub fn with_bounds(&self, bounds: Vec<Bound>) -> Self {
        Self { bounds, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Contract("optimizer needs at least one restart".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Contract(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_evals == 0 {
            return Err(Error::Contract("optimizer needs a positive evaluation budget".into()));
        }
        if let Some(b) = self.bounds.iter().find(|b| !(b.lo < b.hi) || !b.lo.is_finite() || !b.hi.is_finite()) {
            return Err(Error::Contract(format!("invalid bound [{}, {}]", b.lo, b.hi)));
        }
        Ok(())
    }
}

/// Outcome of one restart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub start: Vec<f64>,
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub restarts: Vec<RestartRecord>,
    /// Index of the restart holding the reported optimum.
    pub best_restart: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub params: Vec<f64>,
    pub value: f64,
    pub trace: OptTrace,
}

/// Starting point of restart `index`; independent of the restart count.
pub fn restart_start(config: &OptimizerConfig, index: usize) -> Vec<f64> {
    if index == 0 {
        return config.bounds.iter().map(Bound::center).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    config.bounds.iter().map(|b| rng.gen_range(b.lo..b.hi)).collect()
}

/// Maximizes `objective` over `config.bounds`.
pub fn maximize<F>(objective: F, config: &OptimizerConfig) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    maximize_from(objective, config, &[])
}

/// Like [`maximize`], with the first restarts starting from `starts`
/// instead of the default points.
pub fn maximize_from<F>(objective: F, config: &OptimizerConfig, starts: &[Vec<f64>]) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let dim = config.bounds.len();
    if let Some(s) = starts.iter().find(|s| s.len() != dim) {
        return Err(Error::Contract(format!("start point has {} entries for {dim} parameters", s.len())));
    }
    let records: Vec<RestartRecord> = (0..config.restarts)
        .into_par_iter()
        .map(|i| {
            let start = match starts.get(i) {
                Some(s) => s.iter().zip(&config.bounds).map(|(&x, b)| b.project(x)).collect(),
                None => restart_start(config, i),
            };
            local_search(&objective, config, i, start)
        })
        .collect::<Result<_>>()?;
    let mut best_restart = 0;
    for (i, r) in records.iter().enumerate() {
        if r.best_value > records[best_restart].best_value {
            best_restart = i;
        }
    }
    Ok(Optimum {
        params: records[best_restart].best_params.clone(),
        value: records[best_restart].best_value,
        trace: OptTrace {
            restarts: records,
            best_restart,
        },
    })
}

/// Objective wrapper: projects into the box, negates for minimization,
/// counts evaluations and tracks the best point seen.
struct Counted<'a, F> {
    objective: &'a F,
    bounds: &'a [Bound],
    evals: usize,
    budget: usize,
    best: (f64, Vec<f64>),
}

impl<'a, F: Fn(&[f64]) -> f64> Counted<'a, F> {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.bounds).map(|(&v, b)| b.project(v)).collect()
    }

    /// Returns `−objective(project(x))`.
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        let p = self.project(x);
        let v = (self.objective)(&p);
        self.evals += 1;
        if !v.is_finite() {
            return Err(Error::NonFinite { value: v, point: p });
        }
        if v > self.best.0 {
            self.best = (v, p);
        }
        Ok(-v)
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.budget
    }
}

fn local_search<F: Fn(&[f64]) -> f64>(
    objective: &F,
    config: &OptimizerConfig,
    index: usize,
    start: Vec<f64>,
) -> Result<RestartRecord> {
    let mut f = Counted {
        objective,
        bounds: &config.bounds,
        evals: 0,
        budget: config.max_evals,
        best: (f64::NEG_INFINITY, start.clone()),
    };
    if config.bounds.is_empty() {
        f.eval(&start)?;
        return Ok(RestartRecord {
            start,
            best_params: f.best.1,
            best_value: f.best.0,
            evals: f.evals,
            converged: true,
        });
    }
    descend(&mut f, config, &start, config.tolerance.max(HOP_TOLERANCE), false)?;
    // Monotonic basin hopping: perturb the incumbent and descend again,
    // keeping whatever is better.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ HOP_SALT);
    rng.set_stream(index as u64);
    // The last quarter of the budget is kept for the final refinement.
    let hop_budget = config.max_evals - config.max_evals / 4;
    for _ in 0..config.hops {
        if f.evals >= hop_budget {
            break;
        }
        let incumbent = f.best.1.clone();
        let candidate: Vec<f64> = incumbent
            .iter()
            .zip(&config.bounds)
            .map(|(&x, b)| b.project(x + config.hop_size * b.width() * rng.gen_range(-1.0..1.0)))
            .collect();
        descend(&mut f, config, &candidate, config.tolerance.max(HOP_TOLERANCE), false)?;
    }
    let incumbent = f.best.1.clone();
    let converged = descend(&mut f, config, &incumbent, config.tolerance, config.polish)?;
    Ok(RestartRecord {
        start,
        best_params: f.best.1.clone(),
        best_value: f.best.0,
        evals: f.evals,
        converged,
    })
}

const HOP_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
/// Convergence threshold for the exploratory descents.
const HOP_TOLERANCE: f64 = 1e-8;

/// One local descent from `x0` with the configured method.
fn descend<F: Fn(&[f64]) -> f64>(
    f: &mut Counted<'_, F>,
    config: &OptimizerConfig,
    x0: &[f64],
    tol: f64,
    polish: bool,
) -> Result<bool> {
    match config.method {
        LocalMethod::NelderMead => {
            let mut converged = false;
            let mut x = x0.to_vec();
            let mut scale = 0.1;
            // Re-seeding the simplex at its best vertex guards against
            // premature collapse.
            for _ in 0..3 {
                let before = f.best.0;
                converged = nelder_mead(f, &x, scale, tol)?;
                x = f.best.1.clone();
                scale = 0.02;
                if f.exhausted() || (f.best.0 - before).abs() <= tol {
                    break;
                }
            }
            if polish && !f.exhausted() {
                converged = quasi_newton(f, &x, tol)? || converged;
            }
            Ok(converged)
        }
        LocalMethod::QuasiNewton => quasi_newton(f, x0, tol),
    }
}

/// Adaptive Nelder–Mead (dimension-dependent coefficients). Minimizes the
/// wrapped objective from `x0` with an initial simplex of `scale · width`
/// along each axis. Returns whether the tolerance test was met.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &mut Counted<'_, F>, x0: &[f64], scale: f64, tol: f64) -> Result<bool> {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma) = (1.0, 1.0 + 2.0 / nf);
    let (rho, sigma) = (0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);

    let clamp = |f: &Counted<'_, F>, x: Vec<f64>| -> Vec<f64> {
        x.iter()
            .zip(f.bounds)
            .map(|(&v, b)| if b.periodic { v } else { v.clamp(b.lo, b.hi) })
            .collect()
    };

    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    let base = clamp(f, x0.to_vec());
    simplex.push((f.eval(&base)?, base.clone()));
    for i in 0..n {
        let b = f.bounds[i];
        let step = scale * b.width();
        let mut x = base.clone();
        x[i] += if b.periodic || x[i] + step <= b.hi { step } else { -step };
        let x = clamp(f, x);
        simplex.push((f.eval(&x)?, x));
    }

    loop {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        let spread = simplex[n].0 - simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .map(|(_, x)| x.iter().zip(&simplex[0].1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= tol && diameter <= tol.sqrt() {
            return Ok(true);
        }
        if f.exhausted() {
            return Ok(false);
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(_, x)| x[j]).sum::<f64>() / nf)
            .collect();
        let toward = |t: f64, x: &[f64]| -> Vec<f64> {
            centroid.iter().zip(x).map(|(c, w)| c + t * (c - w)).collect()
        };
        let worst = simplex[n].1.clone();
        let xr = clamp(f, toward(alpha, &worst));
        let fr = f.eval(&xr)?;
        if fr < simplex[0].0 {
            let xe = clamp(f, toward(alpha * gamma, &worst));
            let fe = f.eval(&xe)?;
            simplex[n] = if fe < fr { (fe, xe) } else { (fr, xr) };
            continue;
        }
        if fr < simplex[n - 1].0 {
            simplex[n] = (fr, xr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].0 {
            let xc = clamp(f, toward(alpha * rho, &worst));
            let fc = f.eval(&xc)?;
            (xc, fc)
        } else {
            let xc = clamp(f, toward(-rho, &worst));
            let fc = f.eval(&xc)?;
            (xc, fc)
        };
        if fc < fr.min(simplex[n].0) {
            simplex[n] = (fc, xc);
            continue;
        }
        let best = simplex[0].1.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = best.iter().zip(&v.1).map(|(b, x)| b + sigma * (x - b)).collect();
            let x = clamp(f, x);
            *v = (f.eval(&x)?, x);
            if f.exhausted() {
                break;
            }
        }
    }
}

/// Projected BFGS with central-difference gradients and backtracking line
/// search. Returns whether it converged.
fn quasi_newton<F: Fn(&[f64]) -> f64>(f: &mut Counted<'_, F>, x0: &[f64], tol: f64) -> Result<bool> {
    let n = x0.len();
    let project = |f: &Counted<'_, F>, x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(f.bounds)
            .map(|(&v, b)| if b.periodic { v } else { v.clamp(b.lo, b.hi) })
            .collect()
    };
    let grad = |f: &mut Counted<'_, F>, x: &[f64]| -> Result<Vec<f64>> {
        let mut g = vec![0.0; n];
        for i in 0..n {
            let b = f.bounds[i];
            let h = 1e-6 * b.width().max(1e-3);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            if !b.periodic {
                xp[i] = xp[i].min(b.hi);
                xm[i] = xm[i].max(b.lo);
            }
            let denom = xp[i] - xm[i];
            g[i] = if denom > 0.0 { (f.eval(&xp)? - f.eval(&xm)?) / denom } else { 0.0 };
        }
        Ok(g)
    };

    let mut x = project(f, x0);
    let mut fx = f.eval(&x)?;
    let mut g = grad(f, &x)?;
    let mut h = vec![vec![0.0; n]; n];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..200 {
        if f.exhausted() {
            return Ok(false);
        }
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            for row in h.iter_mut().enumerate() {
                row.1.iter_mut().enumerate().for_each(|(j, v)| *v = if j == row.0 { 1.0 } else { 0.0 });
            }
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        if slope.abs() < tol * tol {
            return Ok(true);
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 && !f.exhausted() {
            let xn = project(f, &x.iter().zip(&d).map(|(a, b)| a + t * b).collect::<Vec<_>>());
            let fxn = f.eval(&xn)?;
            if fxn <= fx + 1e-4 * t * slope {
                accepted = Some((xn, fxn));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            return Ok(false);
        };
        let improvement = fx - fxn;
        let gn = grad(f, &xn)?;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-16 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        x = xn;
        fx = fxn;
        g = gn;
        if improvement.abs() <= tol {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Mutex;

    fn rastrigin(x: &[f64], shift: &[f64]) -> f64 {
        let a = 10.0;
        -(a * x.len() as f64
            + x.iter()
                .zip(shift)
                .map(|(v, s)| {
                    let y = v - s;
                    y * y - a * (2.0 * PI * y).cos()
                })
                .sum::<f64>())
    }

    #[test]
    fn quadratic_bowl() {
        let x0 = [0.3, -1.2, 2.5];
        let config = OptimizerConfig {
            restarts: 3,
            bounds: vec![Bound::new(-4.0, 4.0); 3],
            ..OptimizerConfig::default()
        };
        let bowl = |x: &[f64]| -x.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        for method in [LocalMethod::NelderMead, LocalMethod::QuasiNewton] {
            let opt = maximize(bowl, &OptimizerConfig { method, ..config.clone() }).unwrap();
            for (a, b) in opt.params.iter().zip(&x0) {
                assert!((a - b).abs() < 1e-6, "{method:?}: {:?}", opt.params);
            }
        }
    }

    #[test]
    fn rastrigin_four_dims() {
        let shift = [1.1, -2.3, 0.6, 3.2];
        let config = OptimizerConfig {
            restarts: 50,
            seed: 17,
            bounds: vec![Bound::new(-5.12, 5.12); 4],
            ..OptimizerConfig::default()
        };
        let opt = maximize(|x| rastrigin(x, &shift), &config).unwrap();
        assert!(opt.value >= -1e-3, "best {} at {:?}", opt.value, opt.params);
    }

    #[test]
    fn deterministic_trace() {
        let config = OptimizerConfig {
            restarts: 8,
            seed: 5,
            bounds: vec![Bound::new(-3.0, 3.0), Bound::periodic(0.0, 2.0 * PI)],
            ..OptimizerConfig::default()
        };
        let obj = |x: &[f64]| -(x[0] - 1.0).powi(2) + x[1].cos();
        let a = maximize(obj, &config).unwrap();
        let b = maximize(obj, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.restarts[0].start, vec![0.0, PI]);
    }

    #[test]
    fn prefix_property() {
        let shift = [0.5, -0.5, 1.5];
        let base = OptimizerConfig {
            seed: 3,
            max_evals: 600,
            polish: false,
            bounds: vec![Bound::new(-5.12, 5.12); 3],
            ..OptimizerConfig::default()
        };
        let mut last = f64::NEG_INFINITY;
        let full = maximize(|x| rastrigin(x, &shift), &OptimizerConfig { restarts: 12, ..base.clone() }).unwrap();
        for k in 1..=12 {
            let opt = maximize(|x| rastrigin(x, &shift), &OptimizerConfig { restarts: k, ..base.clone() }).unwrap();
            assert!(opt.value >= last);
            assert_eq!(opt.trace.restarts[..], full.trace.restarts[..k]);
            last = opt.value;
        }
    }

    #[test]
    fn never_leaves_the_box() {
        let seen = Mutex::new(Vec::new());
        let bounds = vec![Bound::new(0.0, 1.0), Bound::periodic(-PI, PI), Bound::new(-2.0, -1.0)];
        let config = OptimizerConfig {
            restarts: 6,
            max_evals: 500,
            bounds: bounds.clone(),
            ..OptimizerConfig::default()
        };
        // Optimum outside the box on every axis.
        let obj = |x: &[f64]| {
            seen.lock().unwrap().push(x.to_vec());
            -(x[0] - 3.0).powi(2) - (x[1] - 10.0).powi(2) - (x[2] + 5.0).powi(2)
        };
        let opt = maximize(obj, &config).unwrap();
        for x in seen.lock().unwrap().iter() {
            for (v, b) in x.iter().zip(&bounds) {
                assert!(*v >= b.lo && *v <= b.hi, "{x:?}");
                if b.periodic {
                    assert!(*v < b.hi);
                }
            }
        }
        assert!((opt.params[0] - 1.0).abs() < 1e-9);
        assert!((opt.params[2] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn periodic_parameters_wrap() {
        // Maximum at φ = 0.1 ≡ 2π + 0.1; start near the upper edge.
        let config = OptimizerConfig {
            restarts: 1,
            bounds: vec![Bound::periodic(0.0, 2.0 * PI)],
            ..OptimizerConfig::default()
        };
        let opt = maximize_from(|x| (x[0] - 0.1).cos(), &config, &[vec![6.2]]).unwrap();
        assert!((opt.params[0] - 0.1).abs() < 1e-5, "{:?}", opt.params);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let config = OptimizerConfig {
            restarts: 2,
            bounds: vec![Bound::new(-1.0, 1.0)],
            ..OptimizerConfig::default()
        };
        let err = maximize(|x| if x[0] > 0.5 { f64::NAN } else { x[0] }, &config).unwrap_err();
        match err {
            Error::NonFinite { point, .. } => assert!(point[0] > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_configs() {
        let good = OptimizerConfig {
            bounds: vec![Bound::new(0.0, 1.0)],
            ..OptimizerConfig::default()
        };
        assert!(maximize(|_| 0.0, &OptimizerConfig { restarts: 0, ..good.clone() }).is_err());
        assert!(maximize(|_| 0.0, &OptimizerConfig { tolerance: 0.0, ..good.clone() }).is_err());
        assert!(maximize(|_| 0.0, &good.with_bounds(vec![Bound::new(1.0, 0.0)])).is_err());
        assert!(maximize_from(|_| 0.0, &good, &[vec![0.1, 0.2]]).is_err());
    }

    #[test]
    fn reported_best_is_max_over_restarts() {
        let config = OptimizerConfig {
            restarts: 10,
            seed: 11,
            max_evals: 300,
            bounds: vec![Bound::new(-5.12, 5.12); 2],
            ..OptimizerConfig::default()
        };
        let opt = maximize(|x| rastrigin(x, &[2.0, -1.0]), &config).unwrap();
        let max = opt.trace.restarts.iter().map(|r| r.best_value).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(opt.value, max);
        assert_eq!(opt.trace.restarts[opt.trace.best_restart].best_value, max);
        for r in &opt.trace.restarts {
            assert!(r.evals <= config.max_evals + 2 * 2 + 1);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn projection_lands_in_bounds(lo in -10.0f64..0.0, w in 0.1f64..10.0, x in -100.0f64..100.0, periodic in any::<bool>()) {
            let b = Bound { lo, hi: lo + w, periodic };
            let y = b.project(x);
            prop_assert!(y >= b.lo && y <= b.hi);
            if periodic {
                prop_assert!(y < b.hi);
                let k = ((x - y) / w).round();
                prop_assert!((x - y - k * w).abs() < 1e-9);
            }
        }
    }
}
