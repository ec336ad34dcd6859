//! Occlusion-aware coarse-to-fine incremental optical flow.
//!
//! Convention: the flow `w` maps the reference grid into the target, so that
//! `y_ref(p) ≈ y_t(p + w(p))` wherever neither frame is occluded.

mod estimate;
mod system;

pub use estimate::{combined_mask, estimate_flow, FlowEstimate};
pub use system::{build_system, solve_increment, Increment, Linearization, LinearizedSystem};

use serde::{Deserialize, Serialize};

use crate::error::{DefenceError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    /// Smoothness weight μ.
    pub mu: f64,
    /// ε in `φ(s) = √(s + ε²)`.
    pub epsilon_phi: f64,
    pub pyramid_ratio: f64,
    /// Coarsest level keeps both sides at or above this.
    pub min_dim: usize,
    /// IRLS rounds per linearisation.
    pub outer_iters: usize,
    pub cg_iters: usize,
    pub cg_tol: f64,
    /// Re-linearisations per pyramid level.
    pub warp_updates: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            mu: 0.01,
            epsilon_phi: 0.001,
            pyramid_ratio: 0.5,
            min_dim: 16,
            outer_iters: 3,
            cg_iters: 100,
            cg_tol: 1e-4,
            warp_updates: 3,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(DefenceError::param(
                "mu",
                format!("{} is not positive", self.mu),
            ));
        }
        if !(self.epsilon_phi > 0.0 && self.epsilon_phi.is_finite()) {
            return Err(DefenceError::param(
                "epsilon_phi",
                format!("{} is not positive", self.epsilon_phi),
            ));
        }
        if !(0.25..=0.9).contains(&self.pyramid_ratio) {
            return Err(DefenceError::param(
                "pyramid_ratio",
                format!("{} is outside [0.25, 0.9]", self.pyramid_ratio),
            ));
        }
        if self.min_dim < 16 {
            return Err(DefenceError::param("min_dim", "must be at least 16"));
        }
        if self.outer_iters == 0 || self.warp_updates == 0 || self.cg_iters == 0 {
            return Err(DefenceError::param(
                "outer_iters",
                "iteration counts must be at least 1",
            ));
        }
        if !(self.cg_tol > 0.0) {
            return Err(DefenceError::param("cg_tol", "must be positive"));
        }
        Ok(())
    }
}

/// `φ(s) = √(s + ε²)`, the smooth stand-in for `√s`.
#[inline]
pub fn phi<T: Scalar>(s: T, eps: T) -> T {
    (s + eps * eps).sqrt()
}

/// `φ'(s) = ½ (s + ε²)^(−½)`.
#[inline]
pub fn phi_prime<T: Scalar>(s: T, eps: T) -> T {
    T::lit(0.5) / (s + eps * eps).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn phi_prime_values() {
        assert_relative_eq!(phi_prime(0.0f64, 0.001), 500.0, max_relative = 1e-12);
        let expected = 0.5 / (1.0f64 + 1e-6).sqrt();
        assert_relative_eq!(phi_prime(1.0f64, 0.001), expected, max_relative = 1e-12);
        assert!((phi_prime(1.0f64, 0.001) - 0.4999998).abs() < 1e-7);
    }

    #[test]
    fn defaults_validate() {
        FlowParams::default().validate().unwrap();
        let bad = FlowParams {
            pyramid_ratio: 0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = FlowParams {
            mu: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn phi_prime_positive_and_decreasing(a in 0.0f64..100.0, b in 0.0f64..100.0, eps in 1e-4f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(phi_prime(lo, eps) > 0.0);
            prop_assert!(phi_prime(hi, eps) > 0.0);
            prop_assert!(phi_prime(lo, eps) >= phi_prime(hi, eps));
        }
    }
}
