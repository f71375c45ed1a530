//! Closed-form envelopes for the logarithmic potential `V(x) = log^β(1+|x|)`.

use serde::{Deserialize, Serialize};

use super::{free_kernel_shape, EnvelopePair, Prefactors, Regime};
use crate::error::{check_alpha, check_positive, Error, Result};
use crate::{distance, norm};

/// Constants of the logarithmic-potential envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Example1Constants {
    pub c0: f64,
    pub c_lower_exp: f64,
    pub c_upper_exp: f64,
    /// Growth rate of `e^{C t^{−1/(β−1)}}` in the lower bound.
    pub c_growth_lower: f64,
    /// Growth rate of `e^{C t^{−1/(β−1)}}` in the upper bound.
    pub c_growth_upper: f64,
    pub lambda1: f64,
    pub prefactors: Prefactors,
}

impl Default for Example1Constants {
    fn default() -> Self {
        Self {
            c0: 1.0,
            c_lower_exp: 2.0,
            c_upper_exp: 0.5,
            c_growth_lower: 0.5,
            c_growth_upper: 2.0,
            lambda1: 1.0,
            prefactors: Prefactors::default(),
        }
    }
}

fn h_log(beta: f64, alpha: f64, r: f64, d: usize) -> f64 {
    1.0 / ((2.0 + r).ln().powf(beta) * (1.0 + r).powf(d as f64 + alpha))
}

/// Evaluates the two-sided bounds for `V = log^β(1+|x|)` in closed form.
pub fn example1_envelope(
    t: f64,
    x: &[f64],
    y: &[f64],
    beta: f64,
    alpha: f64,
    constants: &Example1Constants,
) -> Result<EnvelopePair> {
    check_positive("beta", beta)?;
    check_positive("t", t)?;
    check_alpha(alpha)?;
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    let k = constants;
    if k.c_lower_exp < k.c_upper_exp || k.c_growth_lower > k.c_growth_upper {
        return Err(Error::Precondition(
            "lower envelope constants must not exceed the upper ones".into(),
        ));
    }
    let d = x.len();
    let (rx, ry) = {
        let (a, b) = (norm(x), norm(y));
        (a.min(b), a.max(b))
    };
    let lx = (2.0 + rx).ln();
    let hh = h_log(beta, alpha, rx, d) * h_log(beta, alpha, ry, d);

    let (regime, lo, up) = if t <= k.c0 * lx.powf(1.0 - beta) {
        let base = free_kernel_shape(t, distance(x, y), alpha, d)
            * (1.0 / (t * (2.0 + ry).ln().powf(beta))).min(1.0);
        let v = lx.powf(beta);
        (
            Regime::SmallTime,
            base * (-k.c_lower_exp * t * v).exp(),
            base * (-k.c_upper_exp * t * v).exp(),
        )
    } else if beta <= 1.0 {
        let v = (-k.lambda1 * t).exp() * hh;
        (Regime::LargeTimeIncreasing, v, v)
    } else if t <= 1.0 {
        let growth = t.powf(-1.0 / (beta - 1.0));
        (
            Regime::IntermediateDecreasing,
            (k.c_growth_lower * growth).exp() * hh,
            (k.c_growth_upper * growth).exp() * hh,
        )
    } else {
        let v = (-k.lambda1 * t).exp() * hh;
        (Regime::LargeTimeDecreasing, v, v)
    };
    let pref = k.prefactors.get(regime);
    Ok(EnvelopePair {
        lower: pref.lower * lo,
        upper: pref.upper * up,
        regime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_time_weak_potential() {
        let k = Example1Constants::default();
        let e = example1_envelope(10.0, &[1.0], &[3.0], 0.5, 1.0, &k).unwrap();
        assert_eq!(e.regime, Regime::LargeTimeIncreasing);
        let hh = h_log(0.5, 1.0, 1.0, 1) * h_log(0.5, 1.0, 3.0, 1);
        assert!((e.lower / ((-10.0f64).exp() * hh) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn intermediate_growth_factor() {
        let k = Example1Constants {
            c_growth_lower: 1.0,
            c_growth_upper: 1.0,
            ..Default::default()
        };
        // t = 0.5 exceeds the switch time log⁻¹(10) ≈ 0.434
        let e = example1_envelope(0.5, &[8.0], &[8.0], 2.0, 1.0, &k).unwrap();
        assert_eq!(e.regime, Regime::IntermediateDecreasing);
        let hh = h_log(2.0, 1.0, 8.0, 1).powi(2);
        assert!((e.lower / hh - 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_ordered() {
        let k = Example1Constants::default();
        for &t in &[0.01, 0.3, 1.0, 3.0] {
            for &(x, y) in &[(0.0, 1.0), (2.0, -8.0), (4.0, 4.0)] {
                for beta in [0.5, 1.0, 2.0] {
                    let a = example1_envelope(t, &[x], &[y], beta, 1.0, &k).unwrap();
                    let b = example1_envelope(t, &[y], &[x], beta, 1.0, &k).unwrap();
                    assert_eq!(a, b);
                    assert!(a.lower <= a.upper);
                }
            }
        }
        assert!(example1_envelope(1.0, &[0.0], &[0.0], 0.0, 1.0, &k).is_err());
    }
}
