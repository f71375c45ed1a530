//! Monte Carlo Feynman–Kac estimators over rotationally invariant α-stable paths.
//!
//! Each path draws from its own ChaCha8 stream, selected by the path index on a
//! generator seeded from the configured seed, so estimates are bit-identical
//! for any number of worker threads.

use rand::distr::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::envelopes::{cauchy_kernel, free_kernel_exact_1d};
use crate::error::{check_alpha, check_positive, Error, Result};
use crate::profiles::PotentialProfile;
use crate::pairwise_sum;

/// Accumulated `∫V` beyond which a path's weight is below `10⁻³⁰` and is dropped.
const KILL_EXPONENT: f64 = 69.077_552_789_821_37;
/// Default terminal window as a fraction of `t`.
pub const DEFAULT_DELTA_FRACTION: f64 = 1.0 / 50.0;

/// The killing potential along paths.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Profile(PotentialProfile),
    Constant(f64),
}

impl Potential {
    pub const ZERO: Potential = Potential::Constant(0.0);

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Profile(p) => p.potential(x),
            Potential::Constant(c) => *c,
        }
    }
}

impl From<PotentialProfile> for Potential {
    fn from(p: PotentialProfile) -> Self {
        Potential::Profile(p)
    }
}

/// Discretization and sampling parameters.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub alpha: f64,
    pub d: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Terminal window of the kernel estimator; `None` uses `t/50`.
    pub delta: Option<f64>,
    pub potential: Potential,
}

impl SimConfig {
    pub fn new(alpha: f64, d: usize, potential: Potential) -> Self {
        Self {
            alpha,
            d,
            n_paths: 100_000,
            n_steps: 100,
            seed: 0,
            delta: None,
            potential,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.d == 0 {
            return Err(Error::InvalidParameter {
                name: "d",
                value: 0.0,
                reason: "dimension must be at least 1",
            });
        }
        if self.n_steps < 10 {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                value: self.n_steps as f64,
                reason: "at least 10 time steps are required",
            });
        }
        if self.n_paths < 2 {
            return Err(Error::InvalidParameter {
                name: "n_paths",
                value: self.n_paths as f64,
                reason: "at least 2 paths are required for a standard error",
            });
        }
        if let Some(delta) = self.delta {
            check_positive("delta", delta)?;
        }
        if let Potential::Profile(p) = &self.potential {
            if p.dimension() != self.d {
                return Err(Error::Dimension {
                    expected: self.d,
                    found: p.dimension(),
                });
            }
        }
        if let Potential::Constant(c) = self.potential {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "potential",
                    value: c,
                    reason: "constant potential must be finite and non-negative",
                });
            }
        }
        Ok(())
    }

    fn delta_for(&self, t: f64) -> Result<f64> {
        let delta = self.delta.unwrap_or(t * DEFAULT_DELTA_FRACTION);
        if !(delta < t) {
            return Err(Error::Precondition(format!(
                "terminal window delta = {delta} must be below t = {t}"
            )));
        }
        Ok(delta)
    }
}

/// The generator of path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn open01<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

/// One symmetric α-stable increment over time `dt`, with characteristic
/// function `e^{−dt|ξ|^α}`, written into `out` (length `d`).
pub fn sample_increment_into<R: rand::Rng + ?Sized>(
    alpha: f64,
    dt: f64,
    rng: &mut R,
    out: &mut [f64],
) {
    if out.len() == 1 {
        // Chambers–Mallows–Stuck, symmetric case
        let u = PI * (open01(rng) - 0.5);
        let x = if alpha == 1.0 {
            u.tan()
        } else {
            let w: f64 = Exp1.sample(rng);
            (alpha * u).sin() / u.cos().powf(1.0 / alpha)
                * (((1.0 - alpha) * u).cos() / w).powf((1.0 - alpha) / alpha)
        };
        out[0] = dt.powf(1.0 / alpha) * x;
        return;
    }
    // Gaussian subordinated by a positive (α/2)-stable variable (Kanter)
    let a = alpha / 2.0;
    let u = PI * open01(rng);
    let w: f64 = Exp1.sample(rng);
    let s1 = (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
    let scale = (2.0 * dt.powf(1.0 / a) * s1).sqrt();
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *v = scale * z;
    }
}

/// [`sample_increment_into`] returning a fresh vector.
pub fn sample_increment<R: rand::Rng + ?Sized>(alpha: f64, dt: f64, d: usize, rng: &mut R) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_positive("dt", dt)?;
    let mut out = vec![0.0; d.max(1)];
    sample_increment_into(alpha, dt, rng, &mut out);
    Ok(out)
}

/// `exp(−Σ V(X_{tᵢ})(t_{i+1} − tᵢ))` for a path sampled at increasing times starting at 0.
pub fn feynman_kac_weight(path: &[(f64, Vec<f64>)], potential: &Potential) -> Result<f64> {
    if path.first().map(|p| p.0) != Some(0.0) || path.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Precondition(
            "path times must start at 0 and increase strictly".into(),
        ));
    }
    let q: f64 = path
        .windows(2)
        .map(|w| potential.value(&w[0].1) * (w[1].0 - w[0].0))
        .sum();
    Ok((-q).exp())
}

/// Simulates one path on `[0, horizon]` and returns its weight at each of the
/// `checkpoints` (step counts, ascending) together with the final position.
fn run_path(
    cfg: &SimConfig,
    x0: &[f64],
    dt: f64,
    checkpoints: &[usize],
    index: u64,
    weights: &mut [f64],
    position: &mut [f64],
) {
    let mut rng = path_rng(cfg.seed, index);
    position.copy_from_slice(x0);
    let mut inc = vec![0.0; cfg.d];
    let mut q = 0.0;
    let mut next = 0;
    let total = *checkpoints.last().expect("at least one checkpoint");
    for step in 0..total {
        q += cfg.potential.value(position) * dt;
        if q > KILL_EXPONENT {
            weights[next..].iter_mut().for_each(|w| *w = 0.0);
            return;
        }
        sample_increment_into(cfg.alpha, dt, &mut rng, &mut inc);
        position.iter_mut().zip(&inc).for_each(|(p, i)| *p += i);
        while next < checkpoints.len() && checkpoints[next] == step + 1 {
            weights[next] = (-q).exp();
            next += 1;
        }
    }
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = pairwise_sum(samples) / n;
    let dev: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Survival functional `E_x[exp(−∫₀^t V(X_s) ds)]`: `(mean, stderr)`.
pub fn estimate_survival(x: &[f64], t: f64, cfg: &SimConfig) -> Result<(f64, f64)> {
    let curve = estimate_survival_curve(x, &[t], cfg)?;
    Ok(curve[0])
}

/// Survival estimates at several times from one set of paths on a common grid.
///
/// The step is `max(times)/n_steps`; every time is rounded to the nearest step,
/// so the estimates are non-increasing in `t` path by path.
pub fn estimate_survival_curve(x: &[f64], times: &[f64], cfg: &SimConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    check_point(x, cfg.d)?;
    if times.is_empty() {
        return Ok(Vec::new());
    }
    for &t in times {
        check_positive("t", t)?;
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let dt = t_max / cfg.n_steps as f64;
    let steps: Vec<usize> = times.iter().map(|t| ((t / dt).round() as usize).max(1)).collect();
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by_key(|&i| steps[i]);
    let checkpoints: Vec<usize> = order.iter().map(|&i| steps[i]).collect();

    let k = checkpoints.len();
    let weights: Vec<f64> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut w = vec![0.0; k];
            let mut pos = vec![0.0; cfg.d];
            run_path(cfg, x, dt, &checkpoints, i, &mut w, &mut pos);
            w
        })
        .collect();
    let mut out = vec![(0.0, 0.0); times.len()];
    for (slot, &i) in order.iter().enumerate() {
        let column: Vec<f64> = weights.iter().skip(slot).step_by(k).copied().collect();
        out[i] = mean_and_stderr(&column);
    }
    Ok(out)
}

/// Kernel estimates `p(t, x, y)` at points `(t, x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub points: Vec<(f64, Vec<f64>, Vec<f64>)>,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// First-order terminal-window bias proxy `δ·V(y)·value`.
    pub bias_bounds: Vec<f64>,
    pub n_paths_used: usize,
    pub bias_note: String,
}

/// `E_x[exp(−∫₀^{t−δ} V(X_s) ds)·q(δ, X_{t−δ}, y)]` with `q` the free density.
pub fn estimate_kernel(x: &[f64], y: &[f64], t: f64, cfg: &SimConfig) -> Result<KernelEstimate> {
    estimate_kernel_batch(x, &[y.to_vec()], t, cfg)
}

/// [`estimate_kernel`] for several targets `y`, sharing the simulated paths.
pub fn estimate_kernel_batch(
    x: &[f64],
    ys: &[Vec<f64>],
    t: f64,
    cfg: &SimConfig,
) -> Result<KernelEstimate> {
    cfg.validate()?;
    if cfg.d != 1 {
        return Err(Error::Unsupported(format!(
            "kernel estimation needs the exact free density, available only for d = 1 (got d = {})",
            cfg.d
        )));
    }
    check_point(x, 1)?;
    for y in ys {
        check_point(y, 1)?;
    }
    check_positive("t", t)?;
    let delta = cfg.delta_for(t)?;
    let dt = (t - delta) / cfg.n_steps as f64;
    let alpha = cfg.alpha;
    let terminal = |r: f64| -> Result<f64> {
        if alpha == 1.0 {
            Ok(cauchy_kernel(delta, r))
        } else {
            free_kernel_exact_1d(delta, r, alpha)
        }
    };
    let m = ys.len();
    let samples: Vec<f64> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut w = [0.0];
            let mut pos = [0.0];
            run_path(cfg, x, dt, &[cfg.n_steps], i, &mut w, &mut pos);
            let mut row = vec![0.0; m];
            if w[0] > 0.0 {
                for (slot, y) in row.iter_mut().zip(ys) {
                    *slot = w[0] * terminal(pos[0] - y[0])?;
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .concat();
    let mut est = KernelEstimate {
        points: Vec::with_capacity(m),
        values: Vec::with_capacity(m),
        stderrs: Vec::with_capacity(m),
        bias_bounds: Vec::with_capacity(m),
        n_paths_used: cfg.n_paths,
        bias_note: String::new(),
    };
    for (j, y) in ys.iter().enumerate() {
        let column: Vec<f64> = samples.iter().skip(j).step_by(m).copied().collect();
        let (mean, se) = mean_and_stderr(&column);
        est.points.push((t, x.to_vec(), y.clone()));
        est.values.push(mean);
        est.stderrs.push(se);
        est.bias_bounds.push(delta * cfg.potential.value(y) * mean);
    }
    est.bias_note = format!(
        "terminal window delta={delta:.6e}; first-order bias proxy delta*V(y)*estimate"
    );
    Ok(est)
}

fn check_point(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: x.len(),
        });
    }
    Ok(())
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
