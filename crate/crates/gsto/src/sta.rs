//! Scalar injection functions of the generalized super-twisting algorithm.
//!
//! `phi1` combines a square-root sign term with a linear term; `phi2` is its
//! companion in the second channel and satisfies the algebraic identity
//! `phi2(z) = phi1'(z) * phi1(z)` away from the origin. With `mu1 = 0` both
//! degenerate to the linear injections of a high-gain observer.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Lower clamp on |z| used by diagnostics that evaluate `phi1_prime` near the
/// sliding surface. The observer itself never needs the derivative.
pub const EPS_CLAMP: f64 = 1e-12;

/// Gains of one injection pair: `mu1` scales the |z|^{1/2} term, `mu2` the
/// linear term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuPair {
    pub mu1: f64,
    pub mu2: f64,
}

impl MuPair {
    pub fn new(mu1: f64, mu2: f64) -> Result<Self> {
        if !(mu1.is_finite() && mu2.is_finite()) {
            return Err(Error::NonFiniteInput("MuPair"));
        }
        if mu1 < 0.0 || mu2 < 0.0 {
            return Err(Error::Domain(format!(
                "mu gains must be nonnegative, got ({mu1}, {mu2})"
            )));
        }
        Ok(Self { mu1, mu2 })
    }

    /// True when the square-root gain is zero, i.e. the injection is the
    /// continuous high-gain one.
    pub fn is_hgo(&self) -> bool {
        self.mu1 == 0.0
    }
}

/// Single-valued selection from the Filippov sign set: -1, 0 or +1.
///
/// The selection `sign(0) = 0` keeps the error equilibrium exactly at the
/// origin.
pub fn sign(z: f64) -> Result<i8> {
    if !z.is_finite() {
        return Err(Error::NonFiniteInput("sign"));
    }
    Ok(if z > 0.0 {
        1
    } else if z < 0.0 {
        -1
    } else {
        0
    })
}

/// First injection: `mu1 |z|^{1/2} sign(z) + mu2 z`.
pub fn phi1(z: f64, mu: MuPair) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFiniteInput("phi1"));
    }
    let s = sign(z)? as f64;
    Ok(mu.mu1 * z.abs().sqrt() * s + mu.mu2 * z)
}

/// Derivative of `phi1`: `mu1 / (2 |z|^{1/2}) + mu2`. Singular at `z = 0`.
pub fn phi1_prime(z: f64, mu: MuPair) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFiniteInput("phi1_prime"));
    }
    if z == 0.0 {
        return Err(Error::SingularAtZero);
    }
    Ok(0.5 * mu.mu1 / z.abs().sqrt() + mu.mu2)
}

/// `phi1_prime` with |z| clamped from below at [`EPS_CLAMP`], for diagnostics
/// that must evaluate on the sliding surface.
pub fn phi1_prime_clamped(z: f64, mu: MuPair) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFiniteInput("phi1_prime"));
    }
    Ok(0.5 * mu.mu1 / z.abs().max(EPS_CLAMP).sqrt() + mu.mu2)
}

/// Second injection: `mu1^2/2 sign(z) + (3/2) mu1 mu2 |z|^{1/2} sign(z) + mu2^2 z`.
pub fn phi2(z: f64, mu: MuPair) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFiniteInput("phi2"));
    }
    let s = sign(z)? as f64;
    Ok(0.5 * mu.mu1 * mu.mu1 * s + 1.5 * mu.mu1 * mu.mu2 * z.abs().sqrt() * s + mu.mu2 * mu.mu2 * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mu(mu1: f64, mu2: f64) -> MuPair {
        MuPair::new(mu1, mu2).unwrap()
    }

    #[test]
    fn sign_convention() {
        assert_eq!(sign(0.0).unwrap(), 0);
        assert_eq!(sign(-3.2).unwrap(), -1);
        assert_eq!(sign(1e-300).unwrap(), 1);
        assert!(sign(f64::NAN).is_err());
        assert!(sign(f64::INFINITY).is_err());
    }

    #[test]
    fn phi1_hand_values() {
        // Subsystem-1 gains of the larvae experiment.
        assert_eq!(phi1(0.0, mu(0.03, 1.0)).unwrap(), 0.0);
        assert!((phi1(1.0, mu(0.03, 1.0)).unwrap() - 1.03).abs() < 1e-15);
    }

    #[test]
    fn phi1_prime_hand_values() {
        assert!((phi1_prime(1.0, mu(2.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((phi1_prime(4.0, mu(1.0, 1.0)).unwrap() - 1.25).abs() < 1e-15);
        // HGO degenerate case: constant derivative.
        for z in [-3.0, 0.7, 42.0] {
            assert_eq!(phi1_prime(z, mu(0.0, 2.5)).unwrap(), 2.5);
        }
        assert!(matches!(
            phi1_prime(0.0, mu(1.0, 1.0)),
            Err(Error::SingularAtZero)
        ));
    }

    #[test]
    fn phi2_hand_values() {
        assert_eq!(phi2(0.0, mu(1.0, 1.0)).unwrap(), 0.0);
        // Only the mu1^2/2 term survives when mu2 = 0.
        for z in [-5.0, 0.25, 17.0] {
            let expected = 2.0 * sign(z).unwrap() as f64;
            assert_eq!(phi2(z, mu(2.0, 0.0)).unwrap(), expected);
        }
    }

    #[test]
    fn hgo_degeneracy_is_exact() {
        let m = mu(0.0, 1.7);
        for z in [-2.0, -1e-9, 0.0, 3.5, 1e8] {
            assert_eq!(phi1(z, m).unwrap(), 1.7 * z);
            assert_eq!(phi2(z, m).unwrap(), 1.7 * 1.7 * z);
        }
    }

    proptest! {
        #[test]
        fn odd_symmetry(z in -1e6f64..1e6, m1 in 0.0f64..10.0, m2 in 0.0f64..10.0) {
            let m = mu(m1, m2);
            prop_assert_eq!(phi1(-z, m).unwrap(), -phi1(z, m).unwrap());
            prop_assert_eq!(phi2(-z, m).unwrap(), -phi2(z, m).unwrap());
        }

        #[test]
        fn monotonicity(z1 in -1e6f64..1e6, dz in 1e-6f64..1e6, m1 in 0.01f64..10.0, m2 in 0.0f64..10.0) {
            let m = mu(m1, m2);
            prop_assert!(phi1(z1, m).unwrap() < phi1(z1 + dz, m).unwrap());
        }

        #[test]
        fn derivative_identity(z in -1e6f64..1e6, m1 in 0.0f64..10.0, m2 in 0.0f64..10.0) {
            prop_assume!(z != 0.0);
            let m = mu(m1, m2);
            let lhs = phi2(z, m).unwrap();
            let rhs = phi1_prime(z, m).unwrap() * phi1(z, m).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn sqrt_lower_bound(z in -1e6f64..1e6, m1 in 0.01f64..10.0, m2 in 0.0f64..10.0) {
            // |z|^{1/2} <= |phi1(z)| / mu1.
            let m = mu(m1, m2);
            let lhs = z.abs().sqrt();
            let rhs = phi1(z, m).unwrap().abs() / m1;
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }
}
