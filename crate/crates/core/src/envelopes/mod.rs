//! Closed-form two-sided bounds for the heat kernel `p(t, x, y)` and the Green
//! function of `(−Δ)^{α/2} + V`.
//!
//! All multiplicative constants are configurable and default to 1; they are
//! meant to be fitted (see [`crate::verify`]). The exponent constants of the
//! lower and upper envelopes are separate so that the lower bound can decay
//! faster in time than the upper bound.

mod example1;
mod free;

pub use example1::{example1_envelope, Example1Constants};
pub use free::{
    cauchy_kernel, dirichlet_boundary_factor, free_kernel_exact_1d, free_kernel_shape,
    stable_tail_constant,
};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{check_alpha, check_positive, Error, Result};
use crate::profiles::PotentialProfile;
use crate::quadrature::{integrate, QuadOptions};
use crate::thresholds::{Classification, ThresholdModel};
use crate::{distance, norm};

/// Which two-sided form bounds the kernel at a given `(t, x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    SmallTime,
    LargeTimeIncreasing,
    IntermediateDecreasing,
    LargeTimeDecreasing,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::SmallTime,
        Regime::LargeTimeIncreasing,
        Regime::IntermediateDecreasing,
        Regime::LargeTimeDecreasing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::SmallTime => "small_time",
            Regime::LargeTimeIncreasing => "large_time_increasing",
            Regime::IntermediateDecreasing => "intermediate_decreasing",
            Regime::LargeTimeDecreasing => "large_time_decreasing",
        }
    }

    pub fn is_large_time(self) -> bool {
        self != Regime::SmallTime
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lower and upper multiplicative constants of one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefactorPair {
    pub lower: f64,
    pub upper: f64,
}

impl Default for PrefactorPair {
    fn default() -> Self {
        Self {
            lower: 1.0,
            upper: 1.0,
        }
    }
}

/// Per-regime prefactors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prefactors {
    pub small_time: PrefactorPair,
    pub large_time_increasing: PrefactorPair,
    pub intermediate_decreasing: PrefactorPair,
    pub large_time_decreasing: PrefactorPair,
}

impl Prefactors {
    pub fn get(&self, regime: Regime) -> PrefactorPair {
        match regime {
            Regime::SmallTime => self.small_time,
            Regime::LargeTimeIncreasing => self.large_time_increasing,
            Regime::IntermediateDecreasing => self.intermediate_decreasing,
            Regime::LargeTimeDecreasing => self.large_time_decreasing,
        }
    }

    pub fn get_mut(&mut self, regime: Regime) -> &mut PrefactorPair {
        match regime {
            Regime::SmallTime => &mut self.small_time,
            Regime::LargeTimeIncreasing => &mut self.large_time_increasing,
            Regime::IntermediateDecreasing => &mut self.intermediate_decreasing,
            Regime::LargeTimeDecreasing => &mut self.large_time_decreasing,
        }
    }
}

/// Constants of the survival-probability bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalConstants {
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
}

impl Default for SurvivalConstants {
    fn default() -> Self {
        Self {
            c3: 1.0,
            c4: 1.0,
            c5: 1.0,
            c6: 1.0,
        }
    }
}

/// Scalar constants of the heat-kernel envelopes, separable from the profile
/// and threshold model so they can be read from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConstants {
    pub c0: f64,
    pub c0_tilde: f64,
    pub c_lower_exp: f64,
    pub c_upper_exp: f64,
    pub c_int_lower: f64,
    pub c_int_upper: f64,
    pub c9: f64,
    /// Off-diagonal bound prefactor.
    pub c8: f64,
    /// Separation multiplier of the off-diagonal bound.
    pub c0_prime: f64,
    pub prefactors: Prefactors,
    pub survival: SurvivalConstants,
}

impl Default for EnvelopeConstants {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c0_tilde: 1.0,
            c_lower_exp: 2.0,
            c_upper_exp: 0.5,
            c_int_lower: 2.0,
            c_int_upper: 0.5,
            c9: 1.0,
            c8: 1.0,
            c0_prime: 1.0,
            prefactors: Prefactors::default(),
            survival: SurvivalConstants::default(),
        }
    }
}

impl EnvelopeConstants {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("c0", self.c0),
            ("c0_tilde", self.c0_tilde),
            ("c_lower_exp", self.c_lower_exp),
            ("c_upper_exp", self.c_upper_exp),
            ("c_int_lower", self.c_int_lower),
            ("c_int_upper", self.c_int_upper),
            ("c9", self.c9),
            ("c8", self.c8),
            ("c0_prime", self.c0_prime),
            ("survival.c3", self.survival.c3),
            ("survival.c4", self.survival.c4),
            ("survival.c5", self.survival.c5),
            ("survival.c6", self.survival.c6),
        ];
        for (name, value) in positives {
            check_positive(name, value)?;
        }
        for regime in Regime::ALL {
            let p = self.prefactors.get(regime);
            check_positive("prefactor.lower", p.lower)?;
            check_positive("prefactor.upper", p.upper)?;
            if p.lower > p.upper {
                return Err(Error::Precondition(format!(
                    "{regime} lower prefactor {} exceeds upper prefactor {}",
                    p.lower, p.upper
                )));
            }
        }
        if self.c_lower_exp < self.c_upper_exp {
            return Err(Error::Precondition(
                "c_lower_exp must be at least c_upper_exp".into(),
            ));
        }
        if self.c_int_lower < self.c_int_upper {
            return Err(Error::Precondition(
                "c_int_lower must be at least c_int_upper".into(),
            ));
        }
        if self.c9 > 1.0 {
            // s₀ is non-increasing, so s₀(C₉t) ≥ s₀(t) needs C₉ ≤ 1
            return Err(Error::Precondition("c9 must not exceed 1".into()));
        }
        Ok(())
    }
}

/// Everything needed to evaluate the envelopes.
#[derive(Debug, Clone)]
pub struct EnvelopeConfig {
    pub alpha: f64,
    pub d: usize,
    pub profile: PotentialProfile,
    pub thresholds: ThresholdModel,
    pub lambda1: f64,
    pub constants: EnvelopeConstants,
}

impl EnvelopeConfig {
    /// Default constants; `α`, `d` and the profile are taken from the threshold model.
    pub fn new(thresholds: ThresholdModel, lambda1: f64) -> Result<Self> {
        Self::with_constants(thresholds, lambda1, EnvelopeConstants::default())
    }

    pub fn with_constants(
        thresholds: ThresholdModel,
        lambda1: f64,
        constants: EnvelopeConstants,
    ) -> Result<Self> {
        check_alpha(thresholds.alpha)?;
        check_positive("lambda1", lambda1)?;
        constants.validate()?;
        Ok(Self {
            alpha: thresholds.alpha,
            d: thresholds.profile.dimension(),
            profile: thresholds.profile.clone(),
            thresholds,
            lambda1,
            constants,
        })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_monotone(&self) -> Result<()> {
        if self.thresholds.classification == Classification::Neither {
            return Err(Error::Classification {
                expected: "almost monotone",
                found: Classification::Neither.as_str(),
            });
        }
        Ok(())
    }
}

/// A two-sided bound and the regime that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePair {
    pub lower: f64,
    pub upper: f64,
    pub regime: Regime,
}

/// `H(x) = 1/(g(|x|)(1+|x|)^{d+α})` for a profile.
pub fn ground_state_h(profile: &PotentialProfile, alpha: f64, x: &[f64]) -> f64 {
    let r = norm(x);
    1.0 / (profile.g(r) * (1.0 + r).powf(x.len() as f64 + alpha))
}

/// `H(x)` for the configured profile and stability index.
pub fn ground_state_profile(x: &[f64], config: &EnvelopeConfig) -> f64 {
    ground_state_h(&config.profile, config.alpha, x)
}

/// Surface area `ω_{d−1} = 2π^{d/2}/Γ(d/2)` of the unit sphere in `R^d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / statrs::function::gamma::gamma(d as f64 / 2.0)
}

/// `ln(e^u − 1)`, finite for large `u`.
fn ln_expm1(u: f64) -> f64 {
    if u > 30.0 {
        u + (-(-u).exp()).ln_1p()
    } else {
        u.exp_m1().ln()
    }
}

/// `ln ∫_{|z| ≤ R} e^{−c t g(|z|)} dz` with `R = e^{log1p_r} − 1`.
///
/// The radial integral is taken in `u = ln(1 + r)`, scaled by its maximum
/// log-integrand, so radii far beyond `f64` range are handled.
pub fn log_confinement_integral(
    profile: &PotentialProfile,
    d: usize,
    t: f64,
    log1p_r: f64,
    c: f64,
) -> Result<f64> {
    check_positive("t", t)?;
    check_positive("c", c)?;
    if !(log1p_r >= 0.0) || log1p_r.is_infinite() {
        return Err(Error::InvalidParameter {
            name: "R",
            value: log1p_r.exp_m1(),
            reason: "radius must be finite and non-negative",
        });
    }
    if log1p_r == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let ct = c * t;
    let dm1 = d as f64 - 1.0;
    let log_integrand = |u: f64| {
        let radial = if dm1 == 0.0 { 0.0 } else { dm1 * ln_expm1(u) };
        -ct * profile.ln_g_at_log1p(u).exp() + radial + u
    };
    // the peak is located on a grid, then the integral is split there
    const PROBES: usize = 256;
    let (mut peak_u, mut peak) = (log1p_r, log_integrand(log1p_r));
    for k in 0..PROBES {
        let u = log1p_r * k as f64 / PROBES as f64;
        let v = log_integrand(u);
        if v > peak {
            (peak_u, peak) = (u, v);
        }
    }
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-9,
        max_intervals: 4000,
    };
    let f = |u: f64| (log_integrand(u) - peak).exp();
    let left = integrate(f, 0.0, peak_u, opts).value;
    let right = integrate(f, peak_u, log1p_r, opts).value;
    Ok(peak + (left + right).ln() + unit_sphere_area(d).ln())
}

/// `ω_{d−1} ∫₀^R e^{−c t g(r)} r^{d−1} dr`, the integral of `e^{−c t V}` over the ball of radius `R`.
pub fn confinement_integral(t: f64, r: f64, c: f64, config: &EnvelopeConfig) -> Result<f64> {
    if r == 0.0 {
        return Ok(0.0);
    }
    log_confinement_integral(&config.profile, config.d, t, r.ln_1p(), c).map(f64::exp)
}

/// The regime selected at time `t` for points with `|x| ∧ |y| = m`.
pub fn select_regime(t: f64, m: f64, config: &EnvelopeConfig) -> Result<Regime> {
    check_positive("t", t)?;
    config.check_monotone()?;
    let k = &config.constants;
    if t <= k.c0 * config.thresholds.t0(m)? {
        return Ok(Regime::SmallTime);
    }
    Ok(match config.thresholds.classification {
        Classification::AlmostIncreasing => Regime::LargeTimeIncreasing,
        _ if t <= k.c0_tilde => Regime::IntermediateDecreasing,
        _ => Regime::LargeTimeDecreasing,
    })
}

/// Unit-prefactor lower and upper envelopes in a given regime.
pub fn envelope_units(
    regime: Regime,
    t: f64,
    x: &[f64],
    y: &[f64],
    config: &EnvelopeConfig,
) -> Result<(f64, f64)> {
    let k = &config.constants;
    let (nx, ny) = (norm(x), norm(y));
    let (m, big_m) = (nx.min(ny), nx.max(ny));
    let hh = ground_state_profile(x, config) * ground_state_profile(y, config);
    Ok(match regime {
        Regime::SmallTime => {
            let g_m = config.profile.g(m);
            let base = free_kernel_shape(t, distance(x, y), config.alpha, config.d)
                * (1.0 / (t * config.profile.g(big_m))).min(1.0);
            (
                base * (-k.c_lower_exp * t * g_m).exp(),
                base * (-k.c_upper_exp * t * g_m).exp(),
            )
        }
        Regime::LargeTimeIncreasing | Regime::LargeTimeDecreasing => {
            let v = (-config.lambda1 * t).exp() * hh;
            (v, v)
        }
        Regime::IntermediateDecreasing => {
            let th = &config.thresholds;
            let (p, d) = (&config.profile, config.d);
            let lo = log_confinement_integral(p, d, t, th.log1p_s0(t)?, k.c_int_lower)?;
            let up = log_confinement_integral(p, d, t, th.log1p_s0(k.c9 * t)?, k.c_int_upper)?;
            let ln_hh = hh.ln();
            ((ln_hh + lo).exp(), (ln_hh + up).exp())
        }
    })
}

/// Two-sided heat-kernel envelope at `(t, x, y)`.
pub fn heat_envelope(t: f64, x: &[f64], y: &[f64], config: &EnvelopeConfig) -> Result<EnvelopePair> {
    config.check_point(x)?;
    config.check_point(y)?;
    let regime = select_regime(t, norm(x).min(norm(y)), config)?;
    let (lo, up) = envelope_units(regime, t, x, y, config)?;
    let pref = config.constants.prefactors.get(regime);
    Ok(EnvelopePair {
        lower: pref.lower * lo,
        upper: pref.upper * up,
        regime,
    })
}

/// Upper bound on the survival probability `P_x(killing after t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalBound {
    /// `C₃(e^{−C₄ t g(|x|)} + t/(1+|x|)^α)`.
    pub value: f64,
    /// `C₃ e^{−C₄ t g(|x|)}`, valid when `t ≤ C₀ t₀(|x|)`.
    pub pure_exponential: Option<f64>,
    /// `C₆ log(2+|x|)(1+|x|)^{−α}`, valid when `t ≥ C₅ t₀(|x|)`.
    pub logarithmic: Option<f64>,
}

pub fn survival_upper(t: f64, x: &[f64], config: &EnvelopeConfig) -> Result<SurvivalBound> {
    check_positive("t", t)?;
    config.check_point(x)?;
    let s = config.constants.survival;
    let r = norm(x);
    let decay = s.c3 * (-s.c4 * t * config.profile.g(r)).exp();
    let t0 = config.thresholds.t0(r)?;
    let value = decay + s.c3 * t / (1.0 + r).powf(config.alpha);
    Ok(SurvivalBound {
        value,
        pure_exponential: (t <= config.constants.c0 * t0).then_some(decay),
        logarithmic: (t >= s.c5 * t0)
            .then(|| s.c6 * (2.0 + r).ln() * (1.0 + r).powf(-config.alpha)),
    })
}

/// `C₈ t/|x−y|^{d+α}·(1 ∧ 1/(t max{g(|x|), g(|y|)}))`, for `|x−y| ≥ 2C₀' t^{1/α}`.
pub fn offdiag_upper(t: f64, x: &[f64], y: &[f64], config: &EnvelopeConfig) -> Result<f64> {
    check_positive("t", t)?;
    config.check_point(x)?;
    config.check_point(y)?;
    let k = &config.constants;
    let sep = distance(x, y);
    let needed = 2.0 * k.c0_prime * t.powf(1.0 / config.alpha);
    if sep < needed {
        return Err(Error::Precondition(format!(
            "|x − y| = {sep} is below the separation 2C₀'t^(1/α) = {needed}"
        )));
    }
    let g_max = config.profile.g(norm(x).max(norm(y)));
    Ok(k.c8 * t / sep.powf(config.d as f64 + config.alpha) * (1.0 / (t * g_max)).min(1.0))
}

/// Branch of the Green-function correction factor `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QBranch {
    /// `α < d`: `Q = 1`.
    Transient,
    /// `α = d = 1`: logarithmic.
    Logarithmic,
    /// `α > d = 1`: power.
    Power,
}

impl QBranch {
    pub fn as_str(self) -> &'static str {
        match self {
            QBranch::Transient => "alpha_lt_d",
            QBranch::Logarithmic => "alpha_eq_d",
            QBranch::Power => "alpha_gt_d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenEnvelope {
    pub value: f64,
    pub q: f64,
    pub branch: QBranch,
}

/// Two-sided shape of the Green function `G(x, y) = ∫₀^∞ p(t, x, y) dt`.
pub fn green_envelope(x: &[f64], y: &[f64], config: &EnvelopeConfig) -> Result<GreenEnvelope> {
    config.check_monotone()?;
    config.check_point(x)?;
    config.check_point(y)?;
    green_shape(&config.profile, config.alpha, x, y)
}

/// [`green_envelope`] without the classification requirement.
pub fn green_shape(profile: &PotentialProfile, alpha: f64, x: &[f64], y: &[f64]) -> Result<GreenEnvelope> {
    let d = x.len();
    let sep = distance(x, y);
    if sep == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let branch = if alpha < d as f64 {
        QBranch::Transient
    } else if d >= 2 {
        return Err(Error::Unsupported(format!(
            "Green envelope with alpha = {alpha} ≥ d = {d} requires d = 1"
        )));
    } else if alpha == 1.0 {
        QBranch::Logarithmic
    } else {
        QBranch::Power
    };
    let (nx, ny) = (norm(x), norm(y));
    let (g_m, g_big) = (profile.g(nx.min(ny)), profile.g(nx.max(ny)));
    let sep_a = sep.powf(alpha);
    let q = match branch {
        QBranch::Transient => 1.0,
        QBranch::Logarithmic => (1.0 / (sep_a * g_m)).ln().max(1.0),
        QBranch::Power => (1.0 / (sep_a * g_m)).powf((alpha - d as f64) / alpha).max(1.0),
    };
    let value = sep.powf(alpha - d as f64)
        * (1.0 / (g_m * sep_a)).min(1.0)
        * (1.0 / (g_big * sep_a)).min(1.0)
        * q;
    Ok(GreenEnvelope { value, q, branch })
}
