//! Zero-order-hold discretisation of a diagonal continuous-time system.
//!
//! For one diagonal entry `a < 0`, step `delta ≥ 0` and input weight `b`:
//!
//! ```text
//! a_bar = exp(delta·a)
//! b_bar = (exp(delta·a) − 1) / a · b  =  delta·b · φ(delta·a),   φ(x) = expm1(x)/x
//! ```
//!
//! `φ` has a removable singularity at zero. Below [`LIMIT_THRESHOLD`] the
//! first-order Taylor expansion `1 + x/2` replaces the quotient, which equals
//! the analytic limit `delta·b` as `a → 0` and joins the exact branch without
//! a visible step.

use crate::error::{Error, Result};

/// `|delta·a|` below which `φ` switches to its Taylor expansion.
pub const LIMIT_THRESHOLD: f64 = 1e-6;

/// `φ(x) = (e^x − 1)/x`.
#[inline]
pub(crate) fn phi(x: f64) -> f64 {
    if x.abs() < LIMIT_THRESHOLD {
        1.0 + 0.5 * x
    } else {
        x.exp_m1() / x
    }
}

/// `φ'(x)`, consistent with the branch used by [`phi`].
#[inline]
pub(crate) fn phi_prime(x: f64) -> f64 {
    let ax = x.abs();
    if ax < LIMIT_THRESHOLD {
        0.5
    } else if ax < 1e-3 {
        0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

/// Discretises one `(a, b)` pair with step `delta`.
///
/// Fails on non-finite arguments, a positive evolution entry or a negative step.
pub fn discretize_zoh(a: f64, b: f64, delta: f64) -> Result<(f64, f64)> {
    if !(a.is_finite() && b.is_finite() && delta.is_finite()) {
        return Err(Error::NumericDomain(format!(
            "non-finite discretisation input (a = {a}, b = {b}, delta = {delta})"
        )));
    }
    if a > 0.0 {
        return Err(Error::NumericDomain(format!("evolution entry must be ≤ 0, got {a}")));
    }
    if delta < 0.0 {
        return Err(Error::NumericDomain(format!("step must be ≥ 0, got {delta}")));
    }
    Ok(zoh(a, b, delta))
}

#[inline]
pub(crate) fn zoh(a: f64, b: f64, delta: f64) -> (f64, f64) {
    let x = delta * a;
    (x.exp(), delta * b * phi(x))
}

/// Partial derivatives of one discretised entry.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ZohGrad {
    /// ∂a_bar/∂a
    pub abar_a: f64,
    /// ∂a_bar/∂delta
    pub abar_delta: f64,
    /// ∂b_bar/∂a
    pub bbar_a: f64,
    /// ∂b_bar/∂delta
    pub bbar_delta: f64,
    /// ∂b_bar/∂b
    pub bbar_b: f64,
}

#[inline]
pub(crate) fn zoh_grad(a: f64, b: f64, delta: f64) -> ZohGrad {
    let x = delta * a;
    let abar = x.exp();
    let (p, dp) = (phi(x), phi_prime(x));
    ZohGrad {
        abar_a: delta * abar,
        abar_delta: a * abar,
        bbar_a: b * delta * delta * dp,
        // d/dδ [δ φ(δa)] = φ + x φ'(x)
        bbar_delta: b * (p + x * dp),
        bbar_b: delta * p,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_life_step() {
        let (abar, bbar) = discretize_zoh(-1.0, 1.0, std::f64::consts::LN_2).unwrap();
        assert!((abar - 0.5).abs() < 1e-12);
        assert!((bbar - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vanishing_evolution_uses_limit() {
        let (_, bbar) = discretize_zoh(-1e-12, 2.0, 0.3).unwrap();
        assert!((bbar - 0.6).abs() < 1e-12);
        let (abar, bbar) = discretize_zoh(0.0, 2.0, 0.3).unwrap();
        assert_eq!(abar, 1.0);
        assert_eq!(bbar, 0.6);
    }

    #[test]
    fn zero_step_passes_nothing() {
        let (abar, bbar) = discretize_zoh(-1.0, 1.0, 0.0).unwrap();
        assert_eq!(abar, 1.0);
        assert_eq!(bbar, 0.0);
    }

    #[test]
    fn rejects_bad_domain() {
        assert!(discretize_zoh(f64::NAN, 1.0, 0.1).is_err());
        assert!(discretize_zoh(-1.0, f64::INFINITY, 0.1).is_err());
        assert!(discretize_zoh(1.0, 1.0, 0.1).is_err());
        assert!(discretize_zoh(-1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn branch_switch_is_continuous() {
        let (delta, b) = (1.0, 1.0);
        for eps in [1e-15, 1e-13, 1e-11] {
            let inside = discretize_zoh(-(LIMIT_THRESHOLD - eps), b, delta).unwrap().1;
            let outside = discretize_zoh(-(LIMIT_THRESHOLD + eps), b, delta).unwrap().1;
            assert!((inside - outside).abs() < 1e-9, "{inside} vs {outside}");
        }
    }

    #[test]
    fn phi_prime_matches_finite_differences() {
        for &x in &[-5.0f64, -0.7, -2e-3, -5e-4, -2e-5, -5e-7, 0.0] {
            let h = 1e-6_f64.max(x.abs() * 1e-4);
            let fd = (phi_exact(x + h) - phi_exact(x - h)) / (2.0 * h);
            assert!((phi_prime(x) - fd).abs() < 1e-6, "x = {x}: {} vs {fd}", phi_prime(x));
        }
    }

    fn phi_exact(x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else {
            x.exp_m1() / x
        }
    }

    proptest! {
        #[test]
        fn discretisation_is_stable(a in -50.0f64..-1e-4, delta in 1e-4f64..10.0, b in -5.0f64..5.0) {
            let (abar, bbar) = discretize_zoh(a, b, delta).unwrap();
            prop_assert!(abar > 0.0 && abar < 1.0);
            prop_assert!(bbar.is_finite());
            // b_bar never exceeds the undamped increment delta·b in magnitude
            prop_assert!(bbar.abs() <= (delta * b).abs() * (1.0 + 1e-12));
        }
    }
}
