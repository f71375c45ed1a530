//! Radial potential profiles `g` and the potentials `V(x) = g(|x|)` built from them.
//!
//! A profile must map `[0, ∞)` into `[1, ∞)`, be non-decreasing, grow without
//! bound and satisfy the doubling condition `g(2r) ≤ C₁ g(r)`. Construction
//! checks the pointwise conditions on a validation grid; growth and doubling are
//! measured by [`verify_assumption_h`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::E;

use crate::error::{check_positive, Error, Result};
use crate::norm;

/// Largest radius of the grid used when validating a freshly built profile.
pub const DEFAULT_VALIDATION_RMAX: f64 = 1.0e3;
/// Number of geometric points in the validation grid (plus `r = 0`).
pub const DEFAULT_VALIDATION_POINTS: usize = 64;
const VALIDATION_RMIN: f64 = 1.0 / 64.0;

/// Shape of the radial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileKind {
    /// `g(r) = (1 + r)^p`.
    Power { p: f64 },
    /// `g(r) = log^β(e + r)`.
    Log { beta: f64 },
    /// Tabulated nodes, log-log interpolated.
    Custom(TabulatedProfile),
}

/// A tabulated radial function.
///
/// Between nodes `ln g` is linear in `ln(1 + r)`; below the first node the
/// table is extended by a constant and above the last node by the slope of the
/// last two nodes, so monotone positive tables stay monotone and positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTable", into = "RawTable")]
pub struct TabulatedProfile {
    radii: Vec<f64>,
    values: Vec<f64>,
    log_radii: Vec<f64>,
    log_values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    radii: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawTable> for TabulatedProfile {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Self> {
        TabulatedProfile::new(raw.radii, raw.values)
    }
}

impl From<TabulatedProfile> for RawTable {
    fn from(t: TabulatedProfile) -> Self {
        RawTable {
            radii: t.radii,
            values: t.values,
        }
    }
}

impl TabulatedProfile {
    /// Builds a table. Only structure is checked here (lengths, ordering,
    /// positivity); monotonicity and `g(0) ≥ 1` are enforced by [`make_profile`].
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::Table(format!(
                "{} radii but {} values",
                radii.len(),
                values.len()
            )));
        }
        if radii.len() < 2 {
            return Err(Error::Table("at least two nodes are required".into()));
        }
        if radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Table("radii must be finite and non-negative".into()));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Table("radii must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Table("values must be finite and positive".into()));
        }
        let log_radii = radii.iter().map(|r| r.ln_1p()).collect();
        let log_values = values.iter().map(|v| v.ln()).collect();
        Ok(Self {
            radii,
            values,
            log_radii,
            log_values,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `ln g` at `u = ln(1 + r)`.
    fn ln_value_at_log1p(&self, u: f64) -> f64 {
        let lu = &self.log_radii;
        let lv = &self.log_values;
        let n = lu.len();
        if u <= lu[0] {
            return lv[0];
        }
        let k = if u >= lu[n - 1] {
            n - 2
        } else {
            lu.partition_point(|&x| x <= u) - 1
        };
        let slope = (lv[k + 1] - lv[k]) / (lu[k + 1] - lu[k]);
        lv[k] + slope * (u - lu[k])
    }
}

/// A radial profile `g` in dimension `d`, plus an optional normalization factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialProfile {
    kind: ProfileKind,
    dimension: usize,
    description: String,
    scale: f64,
}

impl PotentialProfile {
    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    /// Rescales the profile so that `g(0) = 1`.
    pub fn normalized(mut self) -> Self {
        let g0 = self.g(0.0);
        self.scale /= g0;
        self
    }

    /// `g(r)`.
    pub fn g(&self, r: f64) -> f64 {
        self.scale
            * match &self.kind {
                ProfileKind::Power { p } => (1.0 + r).powf(*p),
                ProfileKind::Log { beta } => (E + r).ln().powf(*beta),
                ProfileKind::Custom(table) => table.ln_value_at_log1p(r.ln_1p()).exp(),
            }
    }

    /// `ln g(r)` where `r = e^u − 1`; stays finite for `u` far beyond the
    /// range where `r` itself is representable.
    pub fn ln_g_at_log1p(&self, u: f64) -> f64 {
        self.scale.ln()
            + match &self.kind {
                ProfileKind::Power { p } => p * u,
                ProfileKind::Log { beta } => {
                    // ln(e + e^u − 1) = u + ln(1 + (e − 1) e^{−u})
                    beta * (u + ((E - 1.0) * (-u).exp()).ln_1p()).ln()
                }
                ProfileKind::Custom(table) => table.ln_value_at_log1p(u),
            }
    }

    /// The potential `V(x) = g(|x|)`.
    pub fn potential(&self, x: &[f64]) -> f64 {
        self.g(norm(x))
    }

    /// SHA-256 over the serialized profile, used to key model caches.
    pub fn fingerprint(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("profile serializes");
        Sha256::digest(&bytes).into()
    }
}

/// `[0] ∪ geometric(2⁻⁶, r_max, n)`.
pub fn validation_grid(r_max: f64, n: usize) -> Vec<f64> {
    let mut grid = Vec::with_capacity(n + 1);
    grid.push(0.0);
    grid.extend(crate::geometric_grid(VALIDATION_RMIN, r_max, n));
    grid
}

/// Builds a profile and checks `g ≥ 1` and monotonicity on the validation grid.
pub fn make_profile(kind: ProfileKind, d: usize) -> Result<PotentialProfile> {
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "d",
            value: 0.0,
            reason: "dimension must be at least 1",
        });
    }
    let default_description = match &kind {
        ProfileKind::Power { p } => {
            check_positive("p", *p)?;
            format!("(1+r)^{p}")
        }
        ProfileKind::Log { beta } => {
            check_positive("beta", *beta)?;
            format!("log^{beta}(e+r)")
        }
        ProfileKind::Custom(table) => {
            check_table(table)?;
            format!("tabulated ({} nodes)", table.radii().len())
        }
    };
    let profile = PotentialProfile {
        kind,
        dimension: d,
        description: default_description,
        scale: 1.0,
    };
    let r_max = match &profile.kind {
        ProfileKind::Custom(t) => DEFAULT_VALIDATION_RMAX.max(2.0 * t.radii()[t.radii().len() - 1]),
        _ => DEFAULT_VALIDATION_RMAX,
    };
    check_pointwise(&profile, &validation_grid(r_max, DEFAULT_VALIDATION_POINTS))?;
    Ok(profile)
}

/// Builds a profile without any validation. Intended for probing invalid input
/// with [`verify_assumption_h`].
pub fn make_profile_unchecked(kind: ProfileKind, d: usize) -> PotentialProfile {
    PotentialProfile {
        kind,
        dimension: d.max(1),
        description: "unchecked".into(),
        scale: 1.0,
    }
}

fn check_table(table: &TabulatedProfile) -> Result<()> {
    let (r, v) = (table.radii(), table.values());
    if v[0] < 1.0 {
        // constant extension below the first node makes g(0) = v[0]
        return Err(Error::BelowOne {
            radius: 0.0,
            value: v[0],
        });
    }
    for i in 0..r.len() - 1 {
        if v[i + 1] < v[i] {
            return Err(Error::Monotonicity {
                radius: r[i],
                value: v[i],
                next_radius: r[i + 1],
                next_value: v[i + 1],
            });
        }
    }
    Ok(())
}

fn check_pointwise(profile: &PotentialProfile, grid: &[f64]) -> Result<Vec<f64>> {
    let values: Vec<f64> = grid.iter().map(|&r| profile.g(r)).collect();
    for (i, (&r, &g)) in grid.iter().zip(&values).enumerate() {
        if !(g >= 1.0) {
            return Err(Error::BelowOne { radius: r, value: g });
        }
        if i + 1 < grid.len() && values[i + 1] < g {
            return Err(Error::Monotonicity {
                radius: r,
                value: g,
                next_radius: grid[i + 1],
                next_value: values[i + 1],
            });
        }
    }
    Ok(values)
}

/// Measured regularity of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionHReport {
    /// `max g(2r)/g(r)` over the sample grid.
    pub doubling_constant: f64,
    /// `g(r_max) > 10 g(0)`.
    pub growth_verified: bool,
    pub sample_grid: Vec<f64>,
    /// Least-squares slope of `ln g` against `ln(1 + r)` on the upper half of the grid.
    pub q1_estimate: f64,
}

/// Checks the pointwise conditions and measures the doubling constant and the
/// polynomial growth exponent.
pub fn verify_assumption_h(
    profile: &PotentialProfile,
    r_max: f64,
    n_samples: usize,
) -> Result<AssumptionHReport> {
    if !(r_max > 1.0) {
        return Err(Error::InvalidParameter {
            name: "r_max",
            value: r_max,
            reason: "must exceed 1",
        });
    }
    if n_samples < 16 {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            value: n_samples as f64,
            reason: "at least 16 samples are required",
        });
    }
    let grid = validation_grid(r_max, n_samples);
    let values = check_pointwise(profile, &grid)?;

    let doubling_constant = grid
        .iter()
        .zip(&values)
        .map(|(&r, &g)| profile.g(2.0 * r) / g)
        .fold(1.0_f64, f64::max);

    let upper = &grid[grid.len() / 2..];
    let xs: Vec<f64> = upper.iter().map(|r| r.ln_1p()).collect();
    let ys: Vec<f64> = upper.iter().map(|&r| profile.g(r).ln()).collect();
    let q1_estimate = crate::linear_fit(&xs, &ys).slope;

    Ok(AssumptionHReport {
        doubling_constant,
        growth_verified: values[values.len() - 1] > 10.0 * values[0],
        sample_grid: grid,
        q1_estimate,
    })
}

/// The potential `V(x)`; `C₂ = C₃ = 1` comparability with the profile.
pub fn eval_v(profile: &PotentialProfile, x: &[f64]) -> f64 {
    profile.potential(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn power(p: f64) -> PotentialProfile {
        make_profile(ProfileKind::Power { p }, 1).unwrap()
    }

    fn log(beta: f64) -> PotentialProfile {
        make_profile(ProfileKind::Log { beta }, 1).unwrap()
    }

    #[test]
    fn builtin_values() {
        assert_eq!(power(2.0).g(0.0), 1.0);
        assert_eq!(power(2.0).g(3.0), 16.0);
        assert!((log(2.0).g(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(eval_v(&power(2.0), &[0.0, 0.0]), 1.0);
        assert_eq!(eval_v(&power(1.0), &[4.0]), 5.0);
        let r = E * E - E;
        assert!((eval_v(&log(1.0), &[r]) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_profile(ProfileKind::Power { p: 0.0 }, 1).is_err());
        assert!(make_profile(ProfileKind::Power { p: -1.0 }, 1).is_err());
        assert!(make_profile(ProfileKind::Log { beta: 0.0 }, 1).is_err());
        assert!(make_profile(ProfileKind::Log { beta: 1.0 }, 0).is_err());
    }

    #[test]
    fn custom_tables() {
        let t = TabulatedProfile::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 4.0]).unwrap();
        let p = make_profile(ProfileKind::Custom(t), 1).unwrap();
        assert!((p.g(1.0) - 2.0).abs() < 1e-12);
        assert!(p.g(10.0) > p.g(2.0));

        let decreasing = TabulatedProfile::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0]).unwrap();
        match make_profile(ProfileKind::Custom(decreasing), 1) {
            Err(Error::Monotonicity { radius, .. }) => assert_eq!(radius, 1.0),
            other => panic!("expected monotonicity error, got {other:?}"),
        }
        let low = TabulatedProfile::new(vec![0.0, 1.0], vec![0.5, 2.0]).unwrap();
        assert!(matches!(
            make_profile(ProfileKind::Custom(low), 1),
            Err(Error::BelowOne { .. })
        ));
        assert!(TabulatedProfile::new(vec![1.0, 0.5], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn log1p_evaluation_matches_direct() {
        for p in [power(2.0), log(0.5), log(2.0)] {
            for r in [0.0, 0.3, 5.0, 1e4] {
                let direct = p.g(r).ln();
                let viau = p.ln_g_at_log1p(r.ln_1p());
                assert!((direct - viau).abs() < 1e-10 * (1.0 + direct.abs()), "{r}");
            }
            assert!(p.ln_g_at_log1p(1000.0).is_finite());
        }
    }

    #[test]
    fn assumption_h_power_doubling() {
        let rep = verify_assumption_h(&power(2.0), 100.0, 64).unwrap();
        // grid supremum of ((1+2r)/(1+r))² is attained at r_max
        let oracle = ((1.0 + 200.0) / 101.0_f64).powi(2);
        assert!((rep.doubling_constant - oracle).abs() < 1e-12);
        assert!((rep.doubling_constant - 4.0).abs() < 0.05);
        assert!(rep.growth_verified);
        assert!((rep.q1_estimate - 2.0).abs() < 1e-9);
    }

    #[test]
    fn assumption_h_log_doubling() {
        let rep = verify_assumption_h(&log(1.0), 100.0, 64).unwrap();
        let oracle = rep
            .sample_grid
            .iter()
            .map(|&r| (E + 2.0 * r).ln() / (E + r).ln())
            .fold(1.0, f64::max);
        assert!((rep.doubling_constant - oracle).abs() < 1e-12);
        assert!(rep.doubling_constant <= 2.0);
        assert!(!rep.growth_verified, "log(e+100) < 10");
    }

    #[test]
    fn assumption_h_reports_violations() {
        let t = TabulatedProfile::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 1.0]).unwrap();
        let bad = make_profile_unchecked(ProfileKind::Custom(t), 1);
        assert!(matches!(
            verify_assumption_h(&bad, 100.0, 64),
            Err(Error::Monotonicity { .. })
        ));
        assert!(verify_assumption_h(&power(1.0), 1.0, 64).is_err());
        assert!(verify_assumption_h(&power(1.0), 10.0, 8).is_err());
    }

    #[test]
    fn normalization_option() {
        let t = TabulatedProfile::new(vec![0.0, 1.0], vec![3.0, 6.0]).unwrap();
        let p = make_profile(ProfileKind::Custom(t), 1).unwrap();
        assert!((p.g(0.0) - 3.0).abs() < 1e-14);
        let n = p.normalized();
        assert!((n.g(0.0) - 1.0).abs() < 1e-15);
        assert!((n.g(1.0) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn builtin_profiles_are_monotone(p in 0.1f64..4.0, beta in 0.1f64..4.0, r in 0.0f64..1e3, eps in 1e-6f64..10.0) {
            for prof in [power(p), log(beta)] {
                prop_assert!(prof.g(r) >= 1.0);
                prop_assert!(prof.g(r) <= prof.g(r + eps));
            }
        }

        #[test]
        fn power_doubling_bounded(p in 0.1f64..4.0) {
            let rep = verify_assumption_h(&power(p), 100.0, 64).unwrap();
            prop_assert!(rep.doubling_constant >= 1.0);
            prop_assert!(rep.doubling_constant <= 2f64.powf(p) + 1e-12);
        }

        #[test]
        fn potential_is_radial(x in prop::array::uniform3(-50.0f64..50.0), a in 0.0f64..6.3, b in 0.0f64..6.3) {
            let prof = make_profile(ProfileKind::Log { beta: 1.5 }, 3).unwrap();
            // rotation about z then about x
            let (ca, sa, cb, sb) = (a.cos(), a.sin(), b.cos(), b.sin());
            let y1 = [ca * x[0] - sa * x[1], sa * x[0] + ca * x[1], x[2]];
            let y = [y1[0], cb * y1[1] - sb * y1[2], sb * y1[1] + cb * y1[2]];
            let (vx, vy) = (eval_v(&prof, &x), eval_v(&prof, &y));
            prop_assert!((vx - vy).abs() <= 1e-12 * vx);
            // sign flips and permutations preserve |x| exactly
            let z = [-x[2], x[0], -x[1]];
            prop_assert_eq!(norm(&x), norm(&z));
            prop_assert_eq!(vx, eval_v(&prof, &z));
        }
    }
}
