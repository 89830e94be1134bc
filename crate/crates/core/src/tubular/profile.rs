//! Smooth cutoff profiles of the distance to M.
//!
//! Each profile equals 1 below r1, 0 above r2, and falls monotonically in between through
//! the C-infinity step S(t) = 1 / (1 + exp(1/t - 1/(1-t))). All derivatives of S vanish at
//! both ends, so any positive power of a profile is smooth as well.

use serde::Serialize;

/// Smooth step from 0 at t <= 0 to 1 at t >= 1.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let z = 1.0 / t - 1.0 / (1.0 - t);
        if z > 700.0 {
            0.0
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// Derivative of [`smooth_step`].
pub fn smooth_step_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let s = smooth_step(t);
    s * (1.0 - s) * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)))
}

/// Profile that is 1 on [0, r1], 0 on [r2, inf).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BumpProfile {
    pub r1: f64,
    pub r2: f64,
}

impl BumpProfile {
    pub fn new(r1: f64, r2: f64) -> Self {
        assert!(0.0 <= r1 && r1 < r2, "profile interval must be increasing");
        Self { r1, r2 }
    }

    /// Cutoff of the glued form: transitions on [3 eps/5, 4 eps/5].
    pub fn rho(eps: f64) -> Self {
        Self::new(0.6 * eps, 0.8 * eps)
    }

    /// Cutoff of the metric change: transitions on [eps/5, 2 eps/5].
    pub fn sigma(eps: f64) -> Self {
        Self::new(0.2 * eps, 0.4 * eps)
    }

    /// Cutoff used when eliminating a form over another tube: transitions on [4 eps/5, eps].
    pub fn rho_tilde(eps: f64) -> Self {
        Self::new(0.8 * eps, eps)
    }

    pub fn value(&self, d: f64) -> f64 {
        1.0 - smooth_step((d - self.r1) / (self.r2 - self.r1))
    }

    pub fn derivative(&self, d: f64) -> f64 {
        let w = self.r2 - self.r1;
        -smooth_step_derivative((d - self.r1) / w) / w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_monotonicity() {
        let p = BumpProfile::rho(0.1);
        assert_eq!(p.value(0.0), 1.0);
        assert_eq!(p.value(0.06), 1.0);
        assert_eq!(p.value(0.08), 0.0);
        let mut last = 1.0;
        for k in 0..=200 {
            let v = p.value(0.06 + 0.02 * k as f64 / 200.0);
            assert!(v <= last + 1e-15);
            last = v;
        }
        assert!((p.value(0.07) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_differences() {
        let p = BumpProfile::sigma(0.3);
        for k in 1..40 {
            let d = 0.06 + 0.06 * k as f64 / 40.0;
            let h = 1e-7;
            let fd = (p.value(d + h) - p.value(d - h)) / (2.0 * h);
            assert!((fd - p.derivative(d)).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn rho_tilde_vanishes_beyond_the_tube() {
        let p = BumpProfile::rho_tilde(0.2);
        assert_eq!(p.value(0.16), 1.0);
        assert_eq!(p.value(0.2), 0.0);
    }
}
