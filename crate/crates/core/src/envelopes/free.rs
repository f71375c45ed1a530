//! The free α-stable transition density and its two-sided shape.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{check_alpha, Error, Result};
use crate::quadrature::{integrate, QuadOptions};

/// `min(t^{−d/α}, t/r^{d+α})`, where `t/0^{d+α} = +∞`.
pub fn free_kernel_shape(t: f64, r: f64, alpha: f64, d: usize) -> f64 {
    let diag = t.powf(-(d as f64) / alpha);
    let r = r.abs();
    if r == 0.0 {
        return diag;
    }
    diag.min(t / r.powf(d as f64 + alpha))
}

/// `lim_{u→∞} u^{1+α} q₁(u) = Γ(1+α) sin(πα/2)/π`, for the unit-time 1D density `q₁`.
pub fn stable_tail_constant(alpha: f64) -> f64 {
    statrs::function::gamma::gamma(1.0 + alpha) * (PI * alpha / 2.0).sin() / PI
}

/// `e^z − 1` without cancellation for small `|z|`.
fn complex_expm1(z: Complex64) -> Complex64 {
    let (a, b) = (z.re, z.im);
    let half = (0.5 * b).sin();
    Complex64::new(a.exp_m1() * b.cos() - 2.0 * half * half, a.exp() * b.sin())
}

/// Unit-time 1D density `q₁(u) = (1/π) ∫₀^∞ e^{−ξ^α} cos(uξ) dξ`.
///
/// The contour is rotated to `ξ = s e^{iθ}` with `θ = π/(2(1+α))`, where both
/// `e^{−ξ^α}` and `e^{iuξ}` decay. For `u ≥ 1` the integrand `e^{−ξ^α} − 1`
/// is used instead; the subtracted term integrates to a purely imaginary value
/// and the difference keeps the `u^{−1−α}` tail without cancellation.
fn unit_density(u: f64, alpha: f64) -> Result<f64> {
    let theta = PI / (2.0 * (1.0 + alpha));
    let rot = Complex64::from_polar(1.0, theta);
    let rot_alpha = Complex64::from_polar(1.0, alpha * theta);
    let subtract = u >= 1.0;
    let mut s_end = (50.0 / (alpha * theta).cos()).powf(1.0 / alpha);
    if u > 0.0 {
        s_end = s_end.min(50.0 / (u * theta.sin()));
    }
    let integrand = |s: f64| {
        let xi_alpha = -rot_alpha * s.powf(alpha);
        let damp = if subtract {
            complex_expm1(xi_alpha)
        } else {
            xi_alpha.exp()
        };
        let wave = (Complex64::i() * u * s * rot).exp();
        (damp * wave * rot).re
    };
    let res = integrate(integrand, 0.0, s_end, QuadOptions::new(1e-15, 1e-11));
    if !res.converged && res.abs_error > 1e-10 {
        return Err(Error::Precondition(format!(
            "Fourier inversion did not converge at u = {u}: error {:e}",
            res.abs_error
        )));
    }
    Ok((res.value / PI).max(f64::MIN_POSITIVE))
}

/// The free symmetric α-stable density `q(t, r)` in one dimension, i.e. the
/// inverse Fourier transform of `e^{−t|ξ|^α}`, via `q(t, r) = t^{−1/α} q₁(r t^{−1/α})`.
pub fn free_kernel_exact_1d(t: f64, r: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    crate::error::check_positive("t", t)?;
    let scale = t.powf(-1.0 / alpha);
    Ok(scale * unit_density(r.abs() * scale, alpha)?)
}

/// Cauchy density `t/(π(t² + r²))`, the `α = 1` case.
pub fn cauchy_kernel(t: f64, r: f64) -> f64 {
    t / (PI * (t * t + r * r))
}

/// `δ^{α/2}/√t ∧ 1`, the boundary factor of the ball-killed kernel at distance `δ` to the boundary.
pub fn dirichlet_boundary_factor(t: f64, delta: f64, alpha: f64) -> f64 {
    (delta.max(0.0).powf(alpha / 2.0) / t.sqrt()).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shape_examples() {
        assert_eq!(free_kernel_shape(1.0, 1.0, 1.3, 2), 1.0);
        assert_eq!(free_kernel_shape(1.0, 2.0, 1.0, 1), 0.25);
        assert_eq!(free_kernel_shape(0.5, 0.0, 1.0, 1), 2.0);
    }

    #[test]
    fn closed_forms() {
        let q = free_kernel_exact_1d(1.0, 0.0, 1.0).unwrap();
        assert!((q - 1.0 / PI).abs() < 1e-12);
        let q = free_kernel_exact_1d(2.0, 2.0, 1.0).unwrap();
        assert!((q - 2.0 / (8.0 * PI)).abs() < 1e-12);
        // q_t(0) = Γ(1 + 1/α)/(π t^{1/α})
        let q = free_kernel_exact_1d(1.0, 0.0, 0.5).unwrap();
        assert!((q - 2.0 / PI).abs() < 1e-10);
        let q = free_kernel_exact_1d(3.0, 0.0, 1.5).unwrap();
        let oracle = statrs::function::gamma::gamma(1.0 + 1.0 / 1.5) / (PI * 3f64.powf(1.0 / 1.5));
        assert!((q / oracle - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_limit_neighbourhood() {
        // α → 2 approaches the N(0, 2t) density
        let q = free_kernel_exact_1d(1.0, 1.0, 1.999).unwrap();
        let gauss = (-0.25f64).exp() / (4.0 * PI).sqrt();
        assert!((q - gauss).abs() < 5e-3);
    }

    #[test]
    fn tail_constant() {
        for alpha in [0.5, 1.0, 1.5] {
            let u = 1e4;
            let q = free_kernel_exact_1d(1.0, u, alpha).unwrap();
            let ratio = q * u.powf(1.0 + alpha) / stable_tail_constant(alpha);
            assert!((ratio - 1.0).abs() < 1e-2, "{alpha}: {ratio}");
        }
        assert!((stable_tail_constant(1.0) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(free_kernel_exact_1d(1.0, 0.0, 2.0).is_err());
        assert!(free_kernel_exact_1d(1.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn shape_scaling(t in 1e-2f64..1e2, r in 0.0f64..1e2, lam in 1e-2f64..1e2, alpha in 0.1f64..1.9, d in 1usize..4) {
            let lhs = free_kernel_shape(lam * t, lam.powf(1.0 / alpha) * r, alpha, d);
            let rhs = lam.powf(-(d as f64) / alpha) * free_kernel_shape(t, r, alpha, d);
            prop_assert!((lhs / rhs - 1.0).abs() < 1e-10);
        }

        #[test]
        fn cauchy_agreement(t in 0.05f64..20.0, r in -20.0f64..20.0) {
            let q = free_kernel_exact_1d(t, r, 1.0).unwrap();
            prop_assert!((q - cauchy_kernel(t, r)).abs() < 1e-10);
        }
    }
}
