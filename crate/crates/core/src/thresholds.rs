//! The threshold time `t₀(s)` and the monotone profile `h` comparable to it.
//!
//! `t₀(s)` is the crossing of `t ↦ e^{−t g(s)}` (decreasing onto `(0, 1)`) and
//! `t ↦ t/(1+s)^α` (increasing onto `(0, ∞)`). A [`ThresholdModel`] tabulates
//! `t₀` on a radius grid, fits a monotone `h` by isotonic regression on `ln t₀`
//! and classifies the profile as almost increasing or almost decreasing.

use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, Error, Result};
use crate::profiles::{verify_assumption_h, PotentialProfile};

/// Lower end of the bisection bracket.
const BRACKET_FLOOR: f64 = 1e-300;
const MAX_BISECTIONS: usize = 200;
/// Default residual tolerance for the threshold equation.
pub const DEFAULT_T0_TOL: f64 = 1e-12;
/// Default bound on `C_*` for a monotone classification.
pub const DEFAULT_CLASS_THRESHOLD: f64 = 8.0;

/// Outcome of the almost-monotonicity test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    AlmostIncreasing,
    AlmostDecreasing,
    Neither,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::AlmostIncreasing => "almost_increasing",
            Classification::AlmostDecreasing => "almost_decreasing",
            Classification::Neither => "neither",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `|e^{−t g(s)} − t/(1+s)^α|`.
pub fn t0_residual(profile: &PotentialProfile, alpha: f64, s: f64, t: f64) -> f64 {
    ((-t * profile.g(s)).exp() - t / (1.0 + s).powf(alpha)).abs()
}

/// Solves `e^{−t g(s)} = t/(1+s)^α` by bisection; returns `(t₀, residual)`.
pub fn solve_t0_with_residual(
    profile: &PotentialProfile,
    alpha: f64,
    s: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
            reason: "tolerance must be positive",
        });
    }
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "s",
            value: s,
            reason: "radius must be finite and non-negative",
        });
    }
    let g = profile.g(s);
    let a_log = alpha * s.ln_1p();
    // phi is strictly decreasing with phi(floor) > 0 > phi(hi)
    let phi = |t: f64| -t * g - t.ln() + a_log;
    let mut lo = BRACKET_FLOOR;
    let mut hi = (a_log / g + 1.0).max(1.0);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (r_lo, r_hi) = (
        t0_residual(profile, alpha, s, lo),
        t0_residual(profile, alpha, s, hi),
    );
    let (t, residual) = if r_lo <= r_hi { (lo, r_lo) } else { (hi, r_hi) };
    if residual > tol {
        return Err(Error::ToleranceNotMet { s, residual, tol });
    }
    Ok((t, residual))
}

/// `ln t₀` at `u = ln(1 + s)`, solving `e^{τ + ln g} + τ = αu` for `τ = ln t`
/// by bisection. Finite for radii far beyond `f64` range.
pub fn ln_t0_at_log1p(profile: &PotentialProfile, alpha: f64, u: f64) -> f64 {
    let lg = profile.ln_g_at_log1p(u);
    let au = alpha * u;
    // F is strictly increasing with F(αu) > 0
    let f = |tau: f64| (tau + lg).exp() + tau - au;
    let hi0 = au;
    let mut lo = hi0 - 1.0;
    while f(lo) > 0.0 {
        lo -= 2.0 * (hi0 - lo);
    }
    let mut hi = hi0;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The threshold time `t₀(s)`.
pub fn solve_t0(profile: &PotentialProfile, alpha: f64, s: f64, tol: f64) -> Result<f64> {
    solve_t0_with_residual(profile, alpha, s, tol).map(|(t, _)| t)
}

/// `[0] ∪ geometric(2⁻⁶, r_max, n − 1)`.
pub fn threshold_grid(r_max: f64, n: usize) -> Vec<f64> {
    crate::profiles::validation_grid(r_max, n - 1)
}

/// Tuning of [`fit_threshold_model_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    pub tol: f64,
    pub class_threshold: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_T0_TOL,
            class_threshold: DEFAULT_CLASS_THRESHOLD,
        }
    }
}

/// Tabulated `t₀`, its monotone fit `h` and derived constants.
#[derive(Debug, Clone)]
pub struct ThresholdModel {
    pub alpha: f64,
    pub profile: PotentialProfile,
    pub sample_s: Vec<f64>,
    pub sample_t0: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `h` at the sample radii; non-increasing or non-decreasing.
    pub h_fit: Vec<f64>,
    /// `max_i max(t₀/h, h/t₀)`.
    pub c_star: f64,
    /// `max max(h(2s)/h(s), h(s)/h(2s))` over nodes with `2s` inside the grid.
    pub c_star_star: f64,
    pub classification: Classification,
    pub t0_cap: f64,
    pub t_inf: f64,
    pub q1: f64,
    /// Smallest `C ≥ 1` with `C⁻¹(1+s)^{−q₁} ≤ t₀(s) ≤ C(1 + ln(2+s)/g(s))` on the grid.
    pub sandwich_c2: f64,
    pub options: ThresholdOptions,
    log_u: Vec<f64>,
    log_h: Vec<f64>,
    /// `ln h − ln t₀` at the last node; beyond it `ln h` follows `ln t₀`.
    tail_offset: f64,
}

/// Largest `u = ln(1 + s)` searched when inverting `h` beyond the grid.
const MAX_LOG1P: f64 = 1e12;

/// Fits with default tolerance and classification threshold.
pub fn fit_threshold_model(
    profile: &PotentialProfile,
    alpha: f64,
    s_grid: &[f64],
) -> Result<ThresholdModel> {
    fit_threshold_model_with(profile, alpha, s_grid, ThresholdOptions::default())
}

pub fn fit_threshold_model_with(
    profile: &PotentialProfile,
    alpha: f64,
    s_grid: &[f64],
    options: ThresholdOptions,
) -> Result<ThresholdModel> {
    check_alpha(alpha)?;
    if s_grid.len() < 32 {
        return Err(Error::InvalidParameter {
            name: "s_grid",
            value: s_grid.len() as f64,
            reason: "at least 32 radii are required",
        });
    }
    if s_grid[0] < 0.0 || s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "s_grid must be non-negative and strictly increasing".into(),
        ));
    }
    if !(options.class_threshold >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "class_threshold",
            value: options.class_threshold,
            reason: "must be at least 1",
        });
    }
    let mut sample_t0 = Vec::with_capacity(s_grid.len());
    let mut residuals = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let (t, r) = solve_t0_with_residual(profile, alpha, s, options.tol)?;
        sample_t0.push(t);
        residuals.push(r);
    }
    let log_t0: Vec<f64> = sample_t0.iter().map(|t| t.ln()).collect();

    let inc = isotonic(&log_t0);
    let neg: Vec<f64> = log_t0.iter().map(|v| -v).collect();
    let dec: Vec<f64> = isotonic(&neg).into_iter().map(|v| -v).collect();
    let dev = |fit: &[f64]| {
        fit.iter()
            .zip(&log_t0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let (dev_inc, dev_dec) = (dev(&inc), dev(&dec));
    let increasing = dev_inc <= dev_dec + 1e-12;
    let (log_h, log_dev) = if increasing { (inc, dev_inc) } else { (dec, dev_dec) };
    let c_star = log_dev.exp();
    let classification = if c_star > options.class_threshold {
        Classification::Neither
    } else if increasing {
        Classification::AlmostIncreasing
    } else {
        Classification::AlmostDecreasing
    };

    let s_max = s_grid[s_grid.len() - 1];
    let q1 = verify_assumption_h(profile, s_max.max(2.0), 64)?.q1_estimate;

    let mut model = ThresholdModel {
        alpha,
        profile: profile.clone(),
        sample_s: s_grid.to_vec(),
        sample_t0,
        residuals,
        h_fit: log_h.iter().map(|v| v.exp()).collect(),
        c_star,
        c_star_star: 1.0,
        classification,
        t0_cap: 0.0,
        t_inf: 0.0,
        q1,
        sandwich_c2: 1.0,
        options,
        log_u: s_grid.iter().map(|s| s.ln_1p()).collect(),
        tail_offset: log_h[log_h.len() - 1] - ln_t0_at_log1p(profile, alpha, s_max.ln_1p()),
        log_h,
    };
    model.t0_cap = model.h(2.0);
    model.c_star_star = s_grid
        .iter()
        .filter(|&&s| s > 0.0 && 2.0 * s <= s_max)
        .map(|&s| {
            let q = model.h(2.0 * s) / model.h(s);
            q.max(1.0 / q)
        })
        .fold(1.0, f64::max);
    model.t_inf = model.limit_estimate(increasing);
    model.sandwich_c2 = s_grid
        .iter()
        .zip(&model.sample_t0)
        .map(|(&s, &t)| {
            let upper = 1.0 + (2.0 + s).ln() / profile.g(s);
            let lower = (1.0 + s).powf(-q1);
            (t / upper).max(lower / t)
        })
        .fold(1.0, f64::max);
    Ok(model)
}

/// Least-squares isotonic (non-decreasing) regression, pool-adjacent-violators.
fn isotonic(y: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().expect("two blocks") = ((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat(m).take(w))
        .collect()
}

impl ThresholdModel {
    /// `t₀(s)` from the solver (not the fit).
    pub fn t0(&self, s: f64) -> Result<f64> {
        solve_t0(&self.profile, self.alpha, s, self.options.tol)
    }

    fn increasing(&self) -> bool {
        self.log_h[self.log_h.len() - 1] >= self.log_h[0]
    }

    /// `ln h` at `u = ln(1 + s)`: linear in `u` between nodes; beyond the last
    /// node it tracks `ln t₀`, clipped so that `h` stays monotone.
    fn ln_h_at_log1p(&self, u: f64) -> f64 {
        let (lu, lh) = (&self.log_u, &self.log_h);
        let n = lu.len();
        if u <= lu[0] {
            return lh[0];
        }
        if u > lu[n - 1] {
            let v = self.tail_offset + ln_t0_at_log1p(&self.profile, self.alpha, u);
            return if self.increasing() { v.max(lh[n - 1]) } else { v.min(lh[n - 1]) };
        }
        let k = (lu.partition_point(|&x| x <= u) - 1).min(n - 2);
        lh[k] + (lh[k + 1] - lh[k]) / (lu[k + 1] - lu[k]) * (u - lu[k])
    }

    /// The fitted profile `h(s)`.
    pub fn h(&self, s: f64) -> f64 {
        self.ln_h_at_log1p(s.ln_1p()).exp()
    }

    fn limit_estimate(&self, increasing: bool) -> f64 {
        let s_max = self.sample_s[self.sample_s.len() - 1];
        let last = self.h(s_max);
        let earlier = self.h(s_max / 10.0);
        if increasing && last > earlier * (1.0 + 1e-3) {
            f64::INFINITY
        } else if !increasing && last < earlier * (1.0 - 1e-3) {
            0.0
        } else {
            last
        }
    }

    fn require(&self, expected: Classification) -> Result<()> {
        if self.classification == expected {
            Ok(())
        } else {
            Err(Error::Classification {
                expected: expected.as_str(),
                found: self.classification.as_str(),
            })
        }
    }

    /// `ln(1 + s)` at the first radius where `ln h` reaches `level`, or `None`
    /// if it never does below `u = 10¹²`. `reached(v)` tests a value of `ln h`.
    /// On the grid the piecewise-linear interpolant is inverted exactly; beyond
    /// it the continuation is bracketed by doubling and bisected.
    fn crossing_log1p(&self, level: f64, reached: impl Fn(f64) -> bool) -> Option<f64> {
        let (lu, lh) = (&self.log_u, &self.log_h);
        let n = lu.len();
        let i = match lh.iter().position(|&v| reached(v)) {
            Some(0) => return Some(lu[0]),
            Some(i) => i,
            None => {
                let mut lo = lu[n - 1];
                let mut step = lo.max(1.0);
                let mut hi = lo + step;
                while !reached(self.ln_h_at_log1p(hi)) {
                    if hi > MAX_LOG1P {
                        return None;
                    }
                    lo = hi;
                    step *= 2.0;
                    hi = lo + step;
                }
                for _ in 0..MAX_BISECTIONS {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if reached(self.ln_h_at_log1p(mid)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
        };
        let frac = (level - lh[i - 1]) / (lh[i] - lh[i - 1]);
        Some(lu[i - 1] + frac.clamp(0.0, 1.0) * (lu[i] - lu[i - 1]))
    }

    /// `ln(1 + s₀(t))` with `s₀(t) = inf{s ≥ 0 : h(s) ≤ t} ∨ 2`; finite even when
    /// `s₀(t)` overflows, `+∞` when `h` stays above `t` up to `u = 10¹²`.
    pub fn log1p_s0(&self, t: f64) -> Result<f64> {
        self.require(Classification::AlmostDecreasing)?;
        check_time(t)?;
        let level = t.ln();
        let u = self.crossing_log1p(level, |v| v <= level);
        Ok(u.map_or(f64::INFINITY, |u| u.max(3f64.ln())))
    }

    /// `s₀(t) = inf{s ≥ 0 : h(s) ≤ t} ∨ 2`.
    pub fn eval_s0(&self, t: f64) -> Result<f64> {
        self.log1p_s0(t).map(f64::exp_m1)
    }

    /// `s₁(t) = inf{s > 0 : h(s) ≥ t} ∨ 2`; `+∞` when `h` stays below `t`.
    pub fn eval_s1(&self, t: f64) -> Result<f64> {
        self.require(Classification::AlmostIncreasing)?;
        check_time(t)?;
        let level = t.ln();
        let u = self.crossing_log1p(level, |v| v >= level);
        Ok(u.map_or(f64::INFINITY, |u| u.exp_m1().max(2.0)))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "t",
            value: t,
            reason: "time must be positive and finite",
        })
    }
}
