//! Asymmetric logarithmic barrier shared by the position and attitude loops.
//!
//! For an error `e` constrained to `(-lower, upper)` the barrier is
//!
//! ```text
//! W(e) = (1 - q)/2 ln(lower^2 / (lower^2 - e^2)) + q/2 ln(upper^2 / (upper^2 - e^2))
//! ```
//!
//! with `q = 1` for `e > 0` and `q = 0` otherwise. The backstepping stabilizer
//! `-(b^2 - e^2) k e^3` (with `b` the active bound) makes the barrier decrease
//! at rate `-k e^4`. Every switched quantity vanishes at `e = 0`, so the switch
//! never introduces a jump.

use crate::error::{Error, Result};

/// Magnitudes of the lower and upper error bound: the error must stay in `(-lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBounds {
    pub lower: f64,
    pub upper: f64,
}

impl ErrorBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && upper > 0.0) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "error bounds must be positive and finite, got lower = {lower}, upper = {upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// Bounds implied by a symmetric limit `|state| < limit` and a reference
    /// envelope `-env_lower <= reference <= env_upper`.
    pub fn from_limit(limit: f64, env_lower: f64, env_upper: f64) -> Result<Self> {
        Self::new(limit - env_lower, limit - env_upper)
    }

    pub fn contains(&self, error: f64) -> bool {
        error > -self.lower && error < self.upper
    }

    pub fn check(&self, error: f64) -> Result<()> {
        if self.contains(error) {
            Ok(())
        } else {
            Err(Error::BoundViolation {
                value: error,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    /// The bound facing the error's sign.
    pub fn active(&self, error: f64) -> f64 {
        if switch(error) > 0.0 {
            self.upper
        } else {
            self.lower
        }
    }
}

/// Sign switch: 1 for strictly positive errors, 0 otherwise.
pub fn switch(error: f64) -> f64 {
    if error > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Barrier value; zero at the origin and unbounded at either bound.
pub fn barrier_value(error: f64, bounds: &ErrorBounds) -> Result<f64> {
    bounds.check(error)?;
    let ratio = error / bounds.active(error);
    Ok(-0.5 * (-ratio * ratio).ln_1p())
}

/// `(1 - q)/(lower^2 - e^2) + q/(upper^2 - e^2)`, the factor multiplying `e e_dot`
/// in the barrier's time derivative.
pub fn barrier_gain(error: f64, bounds: &ErrorBounds) -> Result<f64> {
    bounds.check(error)?;
    let b = bounds.active(error);
    Ok(1.0 / (b * b - error * error))
}

/// Backstepping stabilizer `-[q(upper^2 - e^2) + (1 - q)(lower^2 - e^2)] k e^3`.
pub fn stabilizer(error: f64, bounds: &ErrorBounds, gain: f64) -> Result<f64> {
    bounds.check(error)?;
    let b = bounds.active(error);
    Ok(-(b * b - error * error) * gain * error.powi(3))
}

/// Time derivative of [`stabilizer`] along an error trajectory,
/// `-k e^2 e_dot [3q(upper^2 - lower^2) + 3 lower^2 - 5 e^2]`.
pub fn stabilizer_rate(error: f64, error_rate: f64, bounds: &ErrorBounds, gain: f64) -> Result<f64> {
    bounds.check(error)?;
    let q = switch(error);
    let (lo2, up2) = (bounds.lower * bounds.lower, bounds.upper * bounds.upper);
    let e2 = error * error;
    Ok(-gain * e2 * error_rate * (3.0 * q * (up2 - lo2) + 3.0 * lo2 - 5.0 * e2))
}

/// Worst-case error magnitude `bound * sqrt(1 - exp(-2 v0))` reachable when the
/// Lyapunov function never exceeds its initial value `v0`.
pub fn confinement_margin(bound: f64, initial_value: f64) -> f64 {
    bound * (-(-2.0 * initial_value).exp_m1()).max(0.0).sqrt()
}

/// Interval `(-margin_lower - env_lower, margin_upper + env_upper)` guaranteed
/// to contain the constrained state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confinement {
    pub margin_lower: f64,
    pub margin_upper: f64,
    pub interval: (f64, f64),
}

impl Confinement {
    pub fn new(bounds: &ErrorBounds, initial_value: f64, env_lower: f64, env_upper: f64) -> Self {
        let margin_lower = confinement_margin(bounds.lower, initial_value);
        let margin_upper = confinement_margin(bounds.upper, initial_value);
        Self {
            margin_lower,
            margin_upper,
            interval: (-margin_lower - env_lower, margin_upper + env_upper),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.interval.0 && value <= self.interval.1
    }

    /// Strict inclusion in `(-limit, limit)`.
    pub fn within_limit(&self, limit: f64) -> bool {
        self.interval.0 > -limit && self.interval.1 < limit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_nonpositive_bounds() {
        assert!(ErrorBounds::new(0.0, 1.0).is_err());
        assert!(ErrorBounds::new(1.0, -1.0).is_err());
        assert!(ErrorBounds::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn from_limit_subtracts_envelope() {
        let b = ErrorBounds::from_limit(2.2, 0.0, 2.0).unwrap();
        assert_relative_eq!(b.lower, 2.2);
        assert_relative_eq!(b.upper, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn value_blows_up_at_bound() {
        let b = ErrorBounds::new(2.2, 0.2).unwrap();
        // Logarithmic growth: W(upper (1 - eps)) = -ln(2 eps - eps^2) / 2.
        let eps = 1e-9;
        let near = barrier_value(0.2 * (1.0 - eps), &b).unwrap();
        let half = barrier_value(0.1, &b).unwrap();
        assert_relative_eq!(near, -0.5 * (2.0 * eps - eps * eps).ln(), max_relative = 1e-6);
        assert!(near > 60.0 * half);
        let mut last = 0.0;
        for i in 1..1000 {
            let w = barrier_value(0.2 * f64::from(i) / 1000.0, &b).unwrap();
            assert!(w > last);
            last = w;
        }
        assert!(barrier_value(0.2, &b).is_err());
        assert!(barrier_value(-2.2, &b).is_err());
    }

    #[test]
    fn margin_limits() {
        assert_eq!(confinement_margin(0.2, 0.0), 0.0);
        assert_relative_eq!(confinement_margin(0.2, 1e6), 0.2);
        let c = Confinement::new(&ErrorBounds::new(0.3, 0.2).unwrap(), 0.5, 0.1, 0.2);
        assert!(c.within_limit(0.4));
        assert!(c.contains(0.0) && !c.contains(0.4));
    }

    #[test]
    fn switched_terms_continuous_at_origin() {
        let b = ErrorBounds::new(2.2, 0.2).unwrap();
        for f in [
            |e: f64, b: &ErrorBounds| barrier_value(e, b).unwrap(),
            |e: f64, b: &ErrorBounds| stabilizer(e, b, 100.0).unwrap(),
            |e: f64, b: &ErrorBounds| stabilizer_rate(e, 1.0, b, 100.0).unwrap(),
        ] {
            let (left, right) = (f(-1e-12, &b), f(1e-12, &b));
            assert!((left - right).abs() < 1e-20, "{left} vs {right}");
        }
    }
}
