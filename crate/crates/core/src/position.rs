//! Outer-loop position controller.
//!
//! Each axis runs a two-step backstepping design on the tracking error
//! `gamma = p - p_d`. The first step shapes `gamma_dot` towards the barrier
//! stabilizer `beta`; the second drives `zeta = gamma_dot - beta` to zero
//! through the virtual acceleration `delta`. Along the error dynamics
//! `gamma_ddot = delta - (K/m) p_dot - p_d_ddot` this gives
//! `E_dot = -k gamma^4 - m_gain zeta^2` for `E = W(gamma) + zeta^2 / 2`.
//!
//! The three virtual accelerations are then realized by a thrust magnitude
//! and a desired roll/pitch pair for the attitude loop.

use nalgebra::Vector3;

use crate::barrier::{self, Confinement, ErrorBounds};
use crate::error::{Error, Result};
use crate::vehicle::VehicleParams;

pub type AxisBounds = ErrorBounds;

/// Below this thrust (N) the desired attitude is undefined.
pub const THRUST_EPSILON: f64 = 1e-6;

/// Arcsine arguments within this distance of +-1 are treated as round-off.
pub const ASIN_CLAMP_TOLERANCE: f64 = 1e-12;

/// Per-axis gains: `stabilizer` shapes `beta`, `damping` acts on `zeta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionGains {
    pub stabilizer: Vector3<f64>,
    pub damping: Vector3<f64>,
}

impl PositionGains {
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
            return Err(Error::InvalidParameter("position gains must be strictly positive".into()));
        }
        Ok(())
    }
}

impl Default for PositionGains {
    fn default() -> Self {
        Self {
            stabilizer: Vector3::repeat(100.0),
            damping: Vector3::repeat(5.0),
        }
    }
}

pub fn switch_q(gamma: f64) -> f64 {
    barrier::switch(gamma)
}

pub fn stabilizing_beta(gamma: f64, bounds: &AxisBounds, gain: f64) -> Result<f64> {
    barrier::stabilizer(gamma, bounds, gain)
}

pub fn beta_rate(gamma: f64, gamma_dot: f64, bounds: &AxisBounds, gain: f64) -> Result<f64> {
    barrier::stabilizer_rate(gamma, gamma_dot, bounds, gain)
}

pub fn blf_value(gamma: f64, bounds: &AxisBounds) -> Result<f64> {
    barrier::barrier_value(gamma, bounds)
}

/// Backstepping coordinates and Lyapunov values of one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionLoopState {
    pub gamma: f64,
    pub gamma_dot: f64,
    pub zeta: f64,
    /// Barrier value `W`.
    pub barrier: f64,
    /// Augmented value `E = W + zeta^2 / 2`.
    pub energy: f64,
}

impl PositionLoopState {
    pub fn new(gamma: f64, gamma_dot: f64, bounds: &AxisBounds, gain: f64) -> Result<Self> {
        let zeta = gamma_dot - stabilizing_beta(gamma, bounds, gain)?;
        let barrier = blf_value(gamma, bounds)?;
        Ok(Self {
            gamma,
            gamma_dot,
            zeta,
            barrier,
            energy: barrier + 0.5 * zeta * zeta,
        })
    }

    /// Guaranteed decay rate `-k gamma^4 - m zeta^2` of `energy`.
    pub fn energy_rate(&self, stabilizer: f64, damping: f64) -> f64 {
        -stabilizer * self.gamma.powi(4) - damping * self.zeta * self.zeta
    }
}

/// What one axis of the outer loop sees at an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisDemand {
    /// Tracking error `p - p_d`.
    pub gamma: f64,
    /// `p_dot - p_d_dot`.
    pub gamma_dot: f64,
    /// Inertial velocity along the axis, for drag compensation.
    pub velocity: f64,
    /// Reference acceleration `p_d_ddot`.
    pub reference_accel: f64,
}

/// Virtual acceleration of one axis:
/// `delta = (K/m) p_dot + p_d_ddot + beta_dot - gamma G_q - m_gain zeta`.
pub fn virtual_control(
    demand: &AxisDemand,
    bounds: &AxisBounds,
    stabilizer: f64,
    damping: f64,
    drag_per_mass: f64,
) -> Result<f64> {
    let AxisDemand {
        gamma,
        gamma_dot,
        velocity,
        reference_accel,
    } = *demand;
    let beta = stabilizing_beta(gamma, bounds, stabilizer)?;
    let beta_dot = beta_rate(gamma, gamma_dot, bounds, stabilizer)?;
    let barrier_gain = barrier::barrier_gain(gamma, bounds)?;
    let zeta = gamma_dot - beta;
    Ok(drag_per_mass * velocity + reference_accel + beta_dot - gamma * barrier_gain - damping * zeta)
}

/// Virtual accelerations for all three axes.
pub fn virtual_controls(
    demands: &[AxisDemand; 3],
    bounds: &[AxisBounds; 3],
    gains: &PositionGains,
    params: &VehicleParams,
) -> Result<Vector3<f64>> {
    let mut delta = Vector3::zeros();
    for axis in 0..3 {
        delta[axis] = virtual_control(
            &demands[axis],
            &bounds[axis],
            gains.stabilizer[axis],
            gains.damping[axis],
            params.drag[axis] / params.mass,
        )?;
    }
    Ok(delta)
}

/// Net thrust `m |delta + g e_z|` realizing the virtual accelerations.
pub fn extract_thrust(delta: &Vector3<f64>, params: &VehicleParams) -> f64 {
    params.mass * Vector3::new(delta.x, delta.y, delta.z + params.gravity).norm()
}

/// Desired roll and pitch that point the thrust along `delta + g e_z` for the given yaw.
pub fn desired_attitude(delta: &Vector3<f64>, yaw: f64, thrust: f64, params: &VehicleParams) -> Result<(f64, f64)> {
    if !(thrust > THRUST_EPSILON) {
        return Err(Error::DegenerateThrust { thrust });
    }
    let (sy, cy) = yaw.sin_cos();
    let mut argument = params.mass * (delta.x * sy - delta.y * cy) / thrust;
    if argument.abs() > 1.0 {
        if argument.abs() <= 1.0 + ASIN_CLAMP_TOLERANCE {
            argument = argument.signum();
        } else {
            return Err(Error::InfeasibleAttitude { argument });
        }
    }
    let roll = argument.asin();
    let pitch = (delta.x * cy + delta.y * sy).atan2(delta.z + params.gravity);
    Ok((roll, pitch))
}

/// Acceleration demanded by thrust `u_T` along the body axis at the given attitude,
/// minus gravity: the forward map that [`extract_thrust`] and [`desired_attitude`] invert.
pub fn realized_virtual_control(thrust: f64, attitude: &Vector3<f64>, params: &VehicleParams) -> Vector3<f64> {
    let (sf, cf) = attitude.x.sin_cos();
    let (st, ct) = attitude.y.sin_cos();
    let (sp, cp) = attitude.z.sin_cos();
    let scale = thrust / params.mass;
    Vector3::new(
        scale * (cf * st * cp + sf * sp),
        scale * (cf * st * sp - sf * cp),
        scale * cf * ct - params.gravity,
    )
}

/// Interval that provably contains the position for a given initial augmented
/// Lyapunov value, with the reference confined to `[-env_lower, env_upper]`.
pub fn confinement_set(bounds: &AxisBounds, initial_energy: f64, env_lower: f64, env_upper: f64) -> Confinement {
    Confinement::new(bounds, initial_energy.max(0.0), env_lower, env_upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bounds() -> AxisBounds {
        AxisBounds::new(2.2, 0.2).unwrap()
    }

    /// The expanded single-line virtual control (with velocity in the drag term).
    fn virtual_control_expanded(d: &AxisDemand, b: &AxisBounds, k: f64, m: f64, drag: f64) -> f64 {
        let (g, gd) = (d.gamma, d.gamma_dot);
        let q = if g > 0.0 { 1.0 } else { 0.0 };
        let (lo2, up2, g2) = (b.lower * b.lower, b.upper * b.upper, g * g);
        drag * d.velocity + d.reference_accel
            - g * ((1.0 - q) / (lo2 - g2) + q / (up2 - g2))
            - k * g2 * gd * (3.0 * q * (up2 - lo2) + (3.0 * lo2 - 5.0 * g2))
            - m * (gd + (q * (up2 - g2) + (1.0 - q) * (lo2 - g2)) * k * g.powi(3))
    }

    #[test]
    fn switch_values() {
        assert_eq!(switch_q(0.5), 1.0);
        assert_eq!(switch_q(0.0), 0.0);
        assert_eq!(switch_q(-0.3), 0.0);
    }

    #[test]
    fn beta_examples() {
        let b = bounds();
        assert_eq!(stabilizing_beta(0.0, &b, 100.0).unwrap(), 0.0);
        assert_relative_eq!(stabilizing_beta(0.1, &b, 100.0).unwrap(), -0.003, epsilon = 1e-15);
        assert_relative_eq!(stabilizing_beta(-0.1, &b, 100.0).unwrap(), 0.483, epsilon = 1e-12);
        assert!(stabilizing_beta(0.2, &b, 100.0).is_err());
    }

    #[test]
    fn blf_examples() {
        let b = bounds();
        assert_eq!(blf_value(0.0, &b).unwrap(), 0.0);
        assert_relative_eq!(blf_value(0.1, &b).unwrap(), 0.5 * (0.04f64 / 0.03).ln(), epsilon = 1e-15);
        assert_relative_eq!(blf_value(0.1, &b).unwrap(), 0.143_841, epsilon = 1e-6);
        assert!(blf_value(-2.2, &b).is_err());
    }

    #[test]
    fn virtual_control_examples() {
        let b = bounds();
        let rest = AxisDemand {
            gamma: 0.0,
            gamma_dot: 0.0,
            velocity: 0.0,
            reference_accel: 0.0,
        };
        assert_eq!(virtual_control(&rest, &b, 100.0, 5.0, 0.0).unwrap(), 0.0);

        let offset = AxisDemand { gamma: 0.1, ..rest };
        let delta = virtual_control(&offset, &b, 100.0, 5.0, 0.0).unwrap();
        assert_relative_eq!(delta, -0.1 / 0.03 - 5.0 * 0.003, epsilon = 1e-12);
        assert_relative_eq!(delta, -3.3483, epsilon = 1e-4);
    }

    #[test]
    fn expanded_form_agrees() {
        let b = bounds();
        for (i, g) in [-2.0, -0.7, -0.01, 0.0, 0.03, 0.15, 0.199].into_iter().enumerate() {
            let d = AxisDemand {
                gamma: g,
                gamma_dot: 0.3 - 0.2 * i as f64,
                velocity: 1.5 - 0.4 * i as f64,
                reference_accel: -0.8 + 0.25 * i as f64,
            };
            let a = virtual_control(&d, &b, 100.0, 5.0, 0.02).unwrap();
            let e = virtual_control_expanded(&d, &b, 100.0, 5.0, 0.02);
            assert_relative_eq!(a, e, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn beta_rate_matches_finite_difference() {
        let b = bounds();
        // gamma(t) = 0.12 sin(3t) - 0.05 crosses zero, so both branches are hit.
        let gamma = |t: f64| 0.12 * (3.0 * t).sin() - 0.05;
        let gamma_dot = |t: f64| 0.36 * (3.0 * t).cos();
        let h = 1e-6;
        for i in 0..50 {
            let t = 0.037 + 0.041 * f64::from(i);
            if gamma(t).abs() < 1e-3 {
                continue;
            }
            let fd = (stabilizing_beta(gamma(t + h), &b, 100.0).unwrap() - stabilizing_beta(gamma(t - h), &b, 100.0).unwrap()) / (2.0 * h);
            let analytic = beta_rate(gamma(t), gamma_dot(t), &b, 100.0).unwrap();
            assert!((fd - analytic).abs() <= 1e-6 * analytic.abs().max(1e-3), "t={t}: {fd} vs {analytic}");
        }
    }

    #[test]
    fn thrust_examples() {
        let p = VehicleParams::pelican();
        assert_relative_eq!(extract_thrust(&Vector3::zeros(), &p), 4.75785, epsilon = 1e-12);
        assert_eq!(extract_thrust(&Vector3::new(0.0, 0.0, -p.gravity), &p), 0.0);
    }

    #[test]
    fn attitude_examples() {
        let p = VehicleParams::pelican();
        let hover = extract_thrust(&Vector3::zeros(), &p);
        assert_eq!(desired_attitude(&Vector3::zeros(), 0.0, hover, &p).unwrap(), (0.0, 0.0));

        let dx = Vector3::new(1.0, 0.0, 0.0);
        let (roll, pitch) = desired_attitude(&dx, 0.0, extract_thrust(&dx, &p), &p).unwrap();
        assert_eq!(roll, 0.0);
        assert_relative_eq!(pitch, (1.0f64 / 9.81).atan(), epsilon = 1e-15);
        assert_relative_eq!(pitch, 0.101_586, epsilon = 1e-6);

        let dy = Vector3::new(0.0, 1.0, 0.0);
        let thrust = extract_thrust(&dy, &p);
        let (roll, pitch) = desired_attitude(&dy, 0.0, thrust, &p).unwrap();
        assert!(roll < 0.0);
        assert_relative_eq!(roll, (-p.mass / thrust).asin(), epsilon = 1e-15);
        assert_eq!(pitch, 0.0);
    }

    #[test]
    fn attitude_errors() {
        let p = VehicleParams::pelican();
        let delta = Vector3::new(1.0, 0.0, 0.0);
        assert!(matches!(desired_attitude(&delta, 0.0, 0.0, &p), Err(Error::DegenerateThrust { .. })));
        assert!(matches!(
            desired_attitude(&Vector3::new(0.0, 30.0, 0.0), 0.0, 1.0, &p),
            Err(Error::InfeasibleAttitude { .. })
        ));
        // Pure lateral demand with thrust exactly m |delta|: argument is -1 up to round-off.
        let lateral = Vector3::new(0.0, 3.0, -p.gravity);
        let (roll, _) = desired_attitude(&lateral, 0.0, extract_thrust(&lateral, &p) * (1.0 - 1e-14), &p).unwrap();
        assert_relative_eq!(roll, -std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn confinement_examples() {
        let b = bounds();
        let c = confinement_set(&b, 0.0, 0.0, 2.0);
        assert_eq!((c.margin_lower, c.margin_upper), (0.0, 0.0));
        let c = confinement_set(&b, 1e3, 0.0, 2.0);
        assert_relative_eq!(c.margin_upper, 0.2);
        let c = confinement_set(&b, 0.5, 0.0, 2.0);
        assert_relative_eq!(c.margin_upper, 0.2 * (1.0 - (-1.0f64).exp()).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(c.margin_upper, 0.159_012, epsilon = 1e-6);
    }

    #[test]
    fn gains_validation() {
        assert!(PositionGains::uniform(100.0, 5.0).is_ok());
        assert!(PositionGains::uniform(0.0, 5.0).is_err());
        assert!(PositionGains::new(Vector3::repeat(1.0), Vector3::new(1.0, -1.0, 1.0)).is_err());
    }
}
