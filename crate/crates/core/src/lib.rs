//! Numerical toolkit for heat kernels of fractional Schrödinger operators
//! `(−Δ)^{α/2} + V` with confining potentials.
//!
//! The modules follow the pipeline:
//!
//! * [`profiles`]: radial potential profiles and their regularity checks;
//! * [`thresholds`]: the threshold time `t₀(s)`, the monotone fit `h` and its inverses;
//! * [`envelopes`]: closed-form two-sided bounds for the heat kernel and Green function;
//! * [`stable_sim`]: Monte Carlo Feynman–Kac estimators over α-stable paths;
//! * [`spectral`]: a one-dimensional finite-difference spectral oracle;
//! * [`verify`]: constant fitting and sandwich checks of computed kernels against envelopes;
//! * [`config`]: the TOML experiment description shared with the command-line front end.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod envelopes;
pub mod error;
pub mod profiles;
pub mod quadrature;
pub mod spectral;
pub mod stable_sim;
pub mod thresholds;
pub mod verify;

pub use config::ExperimentConfig;
pub use envelopes::{EnvelopeConfig, EnvelopeConstants, EnvelopePair, Prefactors, Regime};
pub use error::{Error, Result};
pub use profiles::{
    eval_v, make_profile, verify_assumption_h, AssumptionHReport, PotentialProfile, ProfileKind,
    TabulatedProfile,
};
pub use spectral::SpectralModel;
pub use stable_sim::{KernelEstimate, Potential, SimConfig};
pub use thresholds::{solve_t0, Classification, ThresholdModel};
pub use verify::{RatioStats, VerifyReport};

/// Euclidean norm, invariant under permutations and sign flips of the
/// coordinates. One-dimensional points return `|x|` exactly.
pub fn norm(x: &[f64]) -> f64 {
    match x {
        [v] => v.abs(),
        [a, b] => {
            let (p, q) = (a * a, b * b);
            (p.min(q) + p.max(q)).sqrt()
        }
        _ => {
            let mut squares: Vec<f64> = x.iter().map(|v| v * v).collect();
            squares.sort_by(f64::total_cmp);
            squares.iter().sum::<f64>().sqrt()
        }
    }
}

/// Euclidean distance `|x − y|`.
pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    match (x, y) {
        ([a], [b]) => (a - b).abs(),
        _ => x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
    }
}

/// `n` geometrically spaced points from `a` to `b` inclusive; endpoints are exact.
pub fn geometric_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(a > 0.0 && b > a && n >= 2, "geometric grid needs 0 < a < b, n ≥ 2");
    let ratio = (b / a).ln();
    (0..n)
        .map(|i| match i {
            0 => a,
            i if i == n - 1 => b,
            i => a * (ratio * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Ordinary least squares fit `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if sxx > 0.0 && syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}
