//! Inner-loop adaptive attitude controller.
//!
//! Per axis the error `upsilon = Theta - Theta_d` is stabilized by the same
//! asymmetric barrier backstepping as the position loop, acting on the attitude
//! model `Theta_ddot = F + G u + h`. The part of `h` that an external estimate
//! does not capture is assumed to be `h0 C(Theta_dot)` with unknown constant
//! `h0`; the adaptive estimate `h_bar` of `h0` follows `h_bar_dot = lambda C`.

use nalgebra::Vector3;

use crate::barrier::{self, Confinement, ErrorBounds};
use crate::error::{Error, Result};

pub type AttitudeBounds = ErrorBounds;

/// Per-axis gains: `stabilizer` shapes `sigma`, `damping` acts on `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeGains {
    pub stabilizer: Vector3<f64>,
    pub damping: Vector3<f64>,
}

impl AttitudeGains {
    pub fn new(stabilizer: Vector3<f64>, damping: Vector3<f64>) -> Result<Self> {
        let gains = Self { stabilizer, damping };
        gains.validate()?;
        Ok(gains)
    }

    pub fn uniform(stabilizer: f64, damping: f64) -> Result<Self> {
        Self::new(Vector3::repeat(stabilizer), Vector3::repeat(damping))
    }

    pub fn validate(&self) -> Result<()> {
        if self.stabilizer.iter().chain(self.damping.iter()).any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidParameter("attitude gains must be strictly positive".into()));
        }
        Ok(())
    }
}

impl Default for AttitudeGains {
    fn default() -> Self {
        Self {
            stabilizer: Vector3::repeat(100.0),
            damping: Vector3::repeat(5.0),
        }
    }
}

/// Adaptive estimate `h_bar` and external estimate `h_hat`, per axis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdaptiveState {
    pub h_bar: Vector3<f64>,
    pub h_hat: Vector3<f64>,
}

pub fn switch_s(upsilon: f64) -> f64 {
    barrier::switch(upsilon)
}

pub fn stabilizing_sigma(upsilon: f64, bounds: &AttitudeBounds, gain: f64) -> Result<f64> {
    barrier::stabilizer(upsilon, bounds, gain)
}

pub fn sigma_rate(upsilon: f64, upsilon_dot: f64, bounds: &AttitudeBounds, gain: f64) -> Result<f64> {
    barrier::stabilizer_rate(upsilon, upsilon_dot, bounds, gain)
}

/// Regressor multiplying the unknown constant in the matched disturbance.
pub fn regressor(rate: f64) -> f64 {
    1.0 + rate * rate
}

/// One axis of the attitude loop at an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeDemand {
    /// `Theta_k - Theta_d_k`.
    pub upsilon: f64,
    /// `Theta_dot_k - Theta_d_dot_k`.
    pub upsilon_dot: f64,
    /// Euler rate `Theta_dot_k`, the regressor argument.
    pub rate: f64,
    /// Desired acceleration `Theta_d_ddot_k`.
    pub reference_accel: f64,
    /// Drift `F_k`.
    pub drift: f64,
    /// Input gain `G_k`.
    pub input_gain: f64,
    /// External disturbance estimate `h_hat_k`.
    pub h_hat: f64,
    /// Adaptive estimate `h_bar_k`.
    pub h_bar: f64,
}

/// Moment `u = [-F + Theta_d_ddot + sigma_dot - h_hat - h_bar C - N lambda - upsilon G_s] / G`.
pub fn attitude_moment(demand: &AttitudeDemand, bounds: &AttitudeBounds, stabilizer: f64, damping: f64) -> Result<f64> {
    if demand.input_gain == 0.0 || !demand.input_gain.is_finite() {
        return Err(Error::DegeneratePlant);
    }
    let AttitudeDemand {
        upsilon,
        upsilon_dot,
        rate,
        reference_accel,
        drift,
        input_gain,
        h_hat,
        h_bar,
    } = *demand;
    let sigma = stabilizing_sigma(upsilon, bounds, stabilizer)?;
    let sigma_dot = sigma_rate(upsilon, upsilon_dot, bounds, stabilizer)?;
    let barrier_gain = barrier::barrier_gain(upsilon, bounds)?;
    let lambda = upsilon_dot - sigma;
    Ok((-drift + reference_accel + sigma_dot - h_hat - h_bar * regressor(rate) - damping * lambda - upsilon * barrier_gain) / input_gain)
}

/// Second backstepping coordinate `lambda = upsilon_dot - sigma`.
pub fn lambda(upsilon: f64, upsilon_dot: f64, bounds: &AttitudeBounds, gain: f64) -> Result<f64> {
    Ok(upsilon_dot - stabilizing_sigma(upsilon, bounds, gain)?)
}

/// Adaptation rate `h_bar_dot = lambda C(Theta_dot)`.
pub fn adaptation_rate(upsilon: f64, upsilon_dot: f64, rate: f64, bounds: &AttitudeBounds, gain: f64) -> Result<f64> {
    Ok(lambda(upsilon, upsilon_dot, bounds, gain)? * regressor(rate))
}

/// Forward-Euler increment of `h_bar` over `dt`. The simulator integrates the
/// rate with its own scheme; this is for callers stepping the law by hand.
pub fn adapt_step(upsilon: f64, upsilon_dot: f64, rate: f64, bounds: &AttitudeBounds, gain: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    Ok(adaptation_rate(upsilon, upsilon_dot, rate, bounds, gain)? * dt)
}

/// Barrier value plus the adaptation error term `h_e^2 / 2`.
pub fn attitude_blf(upsilon: f64, bounds: &AttitudeBounds, h_error: f64) -> Result<f64> {
    Ok(barrier::barrier_value(upsilon, bounds)? + 0.5 * h_error * h_error)
}

/// Backstepping coordinates and Lyapunov values of one attitude axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeLoopState {
    pub upsilon: f64,
    pub upsilon_dot: f64,
    pub lambda: f64,
    /// `V`, including the adaptation error term.
    pub barrier: f64,
    /// `D = V + lambda^2 / 2`.
    pub energy: f64,
}

impl AttitudeLoopState {
    pub fn new(upsilon: f64, upsilon_dot: f64, bounds: &AttitudeBounds, gain: f64, h_error: f64) -> Result<Self> {
        let lambda = lambda(upsilon, upsilon_dot, bounds, gain)?;
        let barrier = attitude_blf(upsilon, bounds, h_error)?;
        Ok(Self {
            upsilon,
            upsilon_dot,
            lambda,
            barrier,
            energy: barrier + 0.5 * lambda * lambda,
        })
    }

    /// Guaranteed decay rate `-z upsilon^4 - n lambda^2` of `energy`.
    pub fn energy_rate(&self, stabilizer: f64, damping: f64) -> f64 {
        -stabilizer * self.upsilon.powi(4) - damping * self.lambda * self.lambda
    }
}

/// Interval guaranteed to contain the attitude for a given initial `D`, with
/// the reference confined to `[-env_lower, env_upper]`.
pub fn attitude_confinement(bounds: &AttitudeBounds, initial_energy: f64, env_lower: f64, env_upper: f64) -> Confinement {
    Confinement::new(bounds, initial_energy.max(0.0), env_lower, env_upper)
}

/// Source of the external estimate `h_hat`.
pub trait DisturbanceEstimator: Send {
    fn estimate(&self) -> Vector3<f64>;

    /// Feed the disturbance observed over the last step, i.e. measured
    /// `Theta_ddot` minus everything the model and the adaptation explain.
    fn update(&mut self, residual: &Vector3<f64>, dt: f64);

    fn reset(&mut self);
}

/// Leaves all compensation to the adaptive law.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroEstimator;

impl DisturbanceEstimator for ZeroEstimator {
    fn estimate(&self) -> Vector3<f64> {
        Vector3::zeros()
    }

    fn update(&mut self, _residual: &Vector3<f64>, _dt: f64) {}

    fn reset(&mut self) {}
}

/// First-order lag `h_hat_dot = (h_meas - h_hat) / tau`, discretized exactly
/// for a measurement held over the step.
#[derive(Debug, Clone, Copy)]
pub struct FirstOrderTracker {
    pub time_constant: f64,
    state: Vector3<f64>,
}

impl FirstOrderTracker {
    pub const DEFAULT_TIME_CONSTANT: f64 = 0.05;

    pub fn new(time_constant: f64) -> Result<Self> {
        if !(time_constant > 0.0 && time_constant.is_finite()) {
            return Err(Error::InvalidParameter(format!("estimator time constant must be positive, got {time_constant}")));
        }
        Ok(Self {
            time_constant,
            state: Vector3::zeros(),
        })
    }
}

impl Default for FirstOrderTracker {
    fn default() -> Self {
        Self {
            time_constant: Self::DEFAULT_TIME_CONSTANT,
            state: Vector3::zeros(),
        }
    }
}

impl DisturbanceEstimator for FirstOrderTracker {
    fn estimate(&self) -> Vector3<f64> {
        self.state
    }

    fn update(&mut self, residual: &Vector3<f64>, dt: f64) {
        let blend = -(-dt / self.time_constant).exp_m1();
        self.state += (residual - self.state) * blend;
    }

    fn reset(&mut self) {
        self.state = Vector3::zeros();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn phi_bounds() -> AttitudeBounds {
        AttitudeBounds::new(0.08, 0.23).unwrap()
    }

    /// Unsimplified quotient form of the stabilizer.
    fn sigma_quotient(u: f64, b: &AttitudeBounds, z: f64) -> f64 {
        let s = if u > 0.0 { 1.0 } else { 0.0 };
        let lo = b.lower * b.lower - u * u;
        let up = b.upper * b.upper - u * u;
        -(lo * up) / ((1.0 - s) * up + s * lo) * z * u.powi(3)
    }

    #[test]
    fn switch_values() {
        assert_eq!(switch_s(0.2), 1.0);
        assert_eq!(switch_s(0.0), 0.0);
        assert_eq!(switch_s(-0.2), 0.0);
    }

    #[test]
    fn sigma_examples() {
        let b = phi_bounds();
        assert_eq!(stabilizing_sigma(0.0, &b, 100.0).unwrap(), 0.0);
        assert_relative_eq!(stabilizing_sigma(0.05, &b, 100.0).unwrap(), -(0.0529 - 0.0025) * 100.0 * 1.25e-4, epsilon = 1e-15);
        assert_relative_eq!(stabilizing_sigma(0.05, &b, 100.0).unwrap(), -6.30e-4, epsilon = 1e-12);
        assert!(stabilizing_sigma(-0.08, &b, 100.0).is_err());
        assert!(stabilizing_sigma(0.23, &b, 100.0).is_err());
    }

    #[test]
    fn sigma_matches_quotient_form() {
        let b = phi_bounds();
        for i in 0..=200 {
            let u = -0.0799 + 0.3098 * f64::from(i) / 200.0;
            let a = stabilizing_sigma(u, &b, 100.0).unwrap();
            let q = sigma_quotient(u, &b, 100.0);
            assert!((a - q).abs() <= 1e-12 * (1.0 + q.abs()), "{u}: {a} vs {q}");
        }
    }

    #[test]
    fn regressor_values() {
        assert_eq!(regressor(0.0), 1.0);
        assert_eq!(regressor(2.0), 5.0);
        for x in [0.1, 0.7, 3.0, 12.5] {
            assert_eq!(regressor(x), regressor(-x));
        }
    }

    #[test]
    fn moment_examples() {
        let b = phi_bounds();
        let rest = AttitudeDemand {
            upsilon: 0.0,
            upsilon_dot: 0.0,
            rate: 0.0,
            reference_accel: 0.0,
            drift: 0.0,
            input_gain: 1.0 / 3.4e-3,
            h_hat: 0.0,
            h_bar: 0.0,
        };
        assert_eq!(attitude_moment(&rest, &b, 100.0, 5.0).unwrap(), 0.0);

        let offset = AttitudeDemand { upsilon: 0.05, ..rest };
        let u = attitude_moment(&offset, &b, 100.0, 5.0).unwrap();
        assert_relative_eq!(u, 3.4e-3 * (-5.0 * 6.30e-4 - 0.05 / (0.0529 - 0.0025)), epsilon = 1e-15);
        assert_relative_eq!(u, -3.384e-3, epsilon = 1e-6);

        let degenerate = AttitudeDemand { input_gain: 0.0, ..rest };
        assert_eq!(attitude_moment(&degenerate, &b, 100.0, 5.0), Err(Error::DegeneratePlant));
    }

    #[test]
    fn adaptation_examples() {
        let b = phi_bounds();
        assert_eq!(adaptation_rate(0.0, 1.0, 0.0, &b, 100.0).unwrap(), 1.0);
        let sigma = stabilizing_sigma(0.05, &b, 100.0).unwrap();
        assert_eq!(adaptation_rate(0.05, sigma, 0.7, &b, 100.0).unwrap(), 0.0);
        assert_relative_eq!(adapt_step(0.0, 1.0, 2.0, &b, 100.0, 0.01).unwrap(), 0.05);
        assert!(adapt_step(0.0, 1.0, 0.0, &b, 100.0, 0.0).is_err());

        // Persistent positive lambda integrates to a strictly increasing estimate.
        let mut h_bar = 0.0;
        for _ in 0..100 {
            let next = h_bar + adapt_step(0.01, 0.2, 0.3, &b, 100.0, 1e-3).unwrap();
            assert!(next > h_bar);
            h_bar = next;
        }
    }

    #[test]
    fn adaptation_bracket_is_lambda() {
        let b = phi_bounds();
        for i in 0..50 {
            let u = -0.07 + 0.006 * f64::from(i);
            let ud = 0.4 - 0.013 * f64::from(i);
            let l = lambda(u, ud, &b, 100.0).unwrap();
            let lo2 = b.lower * b.lower;
            let up2 = b.upper * b.upper;
            let bracket = ud + 100.0 * u.powi(3) * (switch_s(u) * (up2 - lo2) + (lo2 - u * u));
            assert!((l - bracket).abs() <= 1e-12);
        }
    }

    #[test]
    fn blf_examples() {
        let b = AttitudeBounds::new(0.2, 0.2).unwrap();
        assert_eq!(attitude_blf(0.0, &b, 0.0).unwrap(), 0.0);
        assert_eq!(attitude_blf(0.0, &b, 2.0).unwrap(), 2.0);
        assert_relative_eq!(attitude_blf(0.1, &b, 0.0).unwrap(), 0.5 * (0.04f64 / 0.03).ln(), epsilon = 1e-15);
    }

    #[test]
    fn confinement_examples() {
        let b = phi_bounds();
        let c = attitude_confinement(&b, 0.0, 0.1, 0.1);
        assert_eq!((c.margin_lower, c.margin_upper), (0.0, 0.0));
        let c = attitude_confinement(&b, 0.5, 0.0, 0.0);
        assert_relative_eq!(c.margin_upper, 0.23 * (1.0 - (-1.0f64).exp()).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(c.margin_upper, 0.182_864, epsilon = 1e-6);
        let c = attitude_confinement(&b, 1e9, 0.42, 0.27);
        assert!(c.within_limit(0.5 + 1e-12));
    }

    #[test]
    fn tracker_converges_to_constant_residual() {
        let mut est = FirstOrderTracker::default();
        let target = Vector3::new(0.3, -0.1, 0.05);
        for _ in 0..1000 {
            est.update(&target, 1e-3);
        }
        // Twenty time constants.
        assert!((est.estimate() - target).amax() < 1e-8);
        est.reset();
        assert_eq!(est.estimate(), Vector3::zeros());
        assert!(FirstOrderTracker::new(0.0).is_err());
    }
}
