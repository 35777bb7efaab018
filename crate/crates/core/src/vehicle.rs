//! Quadrotor rigid-body model in the plus configuration.
//!
//! Frames follow East-North-Up with a `z y' x''` rotation sequence from the
//! inertial frame to the body frame. Rotors 1 and 3 spin anticlockwise, 2 and
//! 4 clockwise. Attitude is carried as Euler angles `(phi, theta, psi)` and the
//! rotational channel identifies Euler rates with body rates, which is the
//! model the attitude controller is designed against.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Pitch margin at which the Euler-rate transform is declared singular.
pub const EULER_SINGULARITY_MARGIN: f64 = 1e-6;

/// Physical parameters of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// Mass (kg).
    pub mass: f64,
    /// Nominal principal moments of inertia `(Jxx, Jyy, Jzz)` (kg m^2).
    pub inertia: Vector3<f64>,
    /// Unknown part of the principal inertia (kg m^2). Only the truth model sees it.
    pub inertia_delta: Vector3<f64>,
    /// Norm bound on the inertia perturbation (kg m^2).
    pub inertia_bound: f64,
    /// Rotor distance from the centre of mass (m).
    pub arm_length: f64,
    /// Thrust coefficient (N s^2 / rad^2).
    pub thrust_coeff: f64,
    /// Reaction-moment coefficient.
    pub moment_coeff: f64,
    /// Rotor inertia (kg m^2).
    pub rotor_inertia: f64,
    /// Linear drag coefficients `(Kx, Ky, Kz)` (N s / m).
    pub drag: Vector3<f64>,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
}

impl VehicleParams {
    /// AscTec Pelican parameters. The inertia perturbation is 10 % of the
    /// nominal diagonal and drag is a small Stokes-like 0.01 N s/m per axis.
    pub fn pelican() -> Self {
        let inertia = Vector3::new(3.4e-3, 3.4e-3, 4.7e-3);
        let inertia_delta = inertia * 0.1;
        Self {
            mass: 0.485,
            inertia,
            inertia_delta,
            inertia_bound: inertia_delta.amax(),
            arm_length: 0.35,
            thrust_coeff: 2.9842e-5,
            moment_coeff: 3.2320,
            rotor_inertia: 3.4e-5,
            drag: Vector3::repeat(0.01),
            gravity: 9.81,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.mass > 0.0) {
            return invalid("mass must be positive");
        }
        if !(self.arm_length > 0.0) {
            return invalid("arm length must be positive");
        }
        if !(self.thrust_coeff > 0.0) {
            return invalid("thrust coefficient must be positive");
        }
        if !(self.moment_coeff > 0.0) {
            return invalid("moment coefficient must be positive");
        }
        if self.inertia.iter().any(|j| !(*j > 0.0)) {
            return invalid("nominal inertias must be positive");
        }
        if !(self.rotor_inertia >= 0.0) {
            return invalid("rotor inertia must be non-negative");
        }
        if self.drag.iter().any(|k| !(*k >= 0.0)) {
            return invalid("drag coefficients must be non-negative");
        }
        if !(self.gravity > 0.0) {
            return invalid("gravity must be positive");
        }
        if !(self.inertia_bound >= 0.0) {
            return invalid("inertia uncertainty bound must be non-negative");
        }
        // Spectral norm of a diagonal matrix is its largest magnitude entry.
        if self.inertia_delta.amax() > self.inertia_bound * (1.0 + 1e-12) {
            return invalid("inertia perturbation exceeds its norm bound");
        }
        if (self.inertia + self.inertia_delta).iter().any(|j| !(*j > 0.0)) {
            return invalid("perturbed inertia must be positive definite");
        }
        Ok(())
    }

    /// Thrust that balances gravity in level flight.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Inertia ratios `xi_1 .. xi_5` of the attitude model.
    pub fn inertia_ratios(&self) -> [f64; 5] {
        let (jx, jy, jz) = (self.inertia.x, self.inertia.y, self.inertia.z);
        [
            (jy - jz) / jx,
            self.rotor_inertia / jx,
            (jz - jx) / jy,
            self.rotor_inertia / jy,
            (jx - jy) / jz,
        ]
    }
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self::pelican()
    }
}

/// Inertial position/velocity and Euler angles/rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Vector3<f64>,
    pub attitude_rate: Vector3<f64>,
}

impl RigidState {
    pub fn check_domain(&self) -> Result<()> {
        check_attitude_domain(&self.attitude)
    }

    pub fn to_array(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        out[0..3].copy_from_slice(self.position.as_slice());
        out[3..6].copy_from_slice(self.velocity.as_slice());
        out[6..9].copy_from_slice(self.attitude.as_slice());
        out[9..12].copy_from_slice(self.attitude_rate.as_slice());
        out
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self {
            position: Vector3::from_column_slice(&values[0..3]),
            velocity: Vector3::from_column_slice(&values[3..6]),
            attitude: Vector3::from_column_slice(&values[6..9]),
            attitude_rate: Vector3::from_column_slice(&values[9..12]),
        }
    }
}

/// Net thrust and body moments `(u_T, u_phi, u_theta, u_psi)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInputs {
    pub thrust: f64,
    pub moments: Vector3<f64>,
}

impl ControlInputs {
    pub fn new(thrust: f64, moments: Vector3<f64>) -> Self {
        Self { thrust, moments }
    }
}

/// Rotor speeds and the relative speed of the counter-rotating pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorSpeeds {
    pub speeds: [f64; 4],
    /// `omega_1 - omega_2 + omega_3 - omega_4`.
    pub relative: f64,
}

impl RotorSpeeds {
    pub fn new(speeds: [f64; 4]) -> Self {
        Self {
            speeds,
            relative: speeds[0] - speeds[1] + speeds[2] - speeds[3],
        }
    }
}

/// Inputs actually commanded to the airframe together with their rotor allocation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlOutputs {
    pub inputs: ControlInputs,
    pub rotors: RotorSpeeds,
}

pub fn check_attitude_domain(attitude: &Vector3<f64>) -> Result<()> {
    let half_pi = std::f64::consts::FRAC_PI_2;
    if !(attitude.x.abs() < half_pi && attitude.y.abs() < half_pi) {
        return Err(Error::AttitudeDomain {
            roll: attitude.x,
            pitch: attitude.y,
        });
    }
    Ok(())
}

/// Rotation from the inertial frame to the body frame, `R(x'',phi) R(y',theta) R(z,psi)`.
pub fn rotation_matrix(attitude: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_attitude_domain(attitude)?;
    let (sf, cf) = attitude.x.sin_cos();
    let (st, ct) = attitude.y.sin_cos();
    let (sp, cp) = attitude.z.sin_cos();
    Ok(Matrix3::new(
        ct * cp,
        ct * sp,
        -st,
        sf * st * cp - cf * sp,
        sf * st * sp + cf * cp,
        sf * ct,
        cf * st * cp + sf * sp,
        cf * st * sp - sf * cp,
        cf * ct,
    ))
}

/// Map body angular velocity `(p, q, r)` to Euler-angle rates.
pub fn euler_rate_transform(attitude: &Vector3<f64>, body_rate: &Vector3<f64>) -> Result<Vector3<f64>> {
    let pitch = attitude.y;
    if pitch.abs() >= std::f64::consts::FRAC_PI_2 - EULER_SINGULARITY_MARGIN {
        return Err(Error::EulerSingularity { pitch });
    }
    let (sf, cf) = attitude.x.sin_cos();
    let (tt, sec) = (pitch.tan(), 1.0 / pitch.cos());
    let transform = Matrix3::new(1.0, tt * sf, tt * cf, 0.0, cf, -sf, 0.0, sec * sf, sec * cf);
    Ok(transform * body_rate)
}

/// Thrust and moments produced by the given rotor speeds.
pub fn mix_forward(speeds: &[f64; 4], params: &VehicleParams) -> Result<ControlInputs> {
    if let Some((index, &speed)) = speeds.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::NegativeRotorSpeed { index, speed });
    }
    let [w1, w2, w3, w4] = speeds.map(|w| w * w);
    let (ct, cq, d) = (params.thrust_coeff, params.moment_coeff, params.arm_length);
    Ok(ControlInputs {
        thrust: ct * (w1 + w2 + w3 + w4),
        moments: Vector3::new(d * ct * (w4 - w2), d * ct * (w3 - w1), cq * (-w1 + w2 - w3 + w4)),
    })
}

/// Invert the mixing matrix. Fails when any squared speed would be negative.
pub fn allocate_rotors(inputs: &ControlInputs, params: &VehicleParams) -> Result<RotorSpeeds> {
    let (ct, cq, d) = (params.thrust_coeff, params.moment_coeff, params.arm_length);
    let total = inputs.thrust / ct;
    let roll = inputs.moments.x / (d * ct);
    let pitch = inputs.moments.y / (d * ct);
    let yaw = inputs.moments.z / cq;

    let clockwise = 0.5 * (total + yaw);
    let anticlockwise = 0.5 * (total - yaw);
    let squared = [
        0.5 * (anticlockwise - pitch),
        0.5 * (clockwise - roll),
        0.5 * (anticlockwise + pitch),
        0.5 * (clockwise + roll),
    ];
    // Round-off around an exactly zero rotor is not an infeasible demand.
    let scale = total.abs().max(roll.abs()).max(pitch.abs()).max(yaw.abs());
    let floor = -1e-12 * scale;
    if squared.iter().any(|w| !(*w >= floor)) {
        return Err(Error::InfeasibleAllocation { squared });
    }
    Ok(RotorSpeeds::new(squared.map(|w| w.max(0.0).sqrt())))
}

/// Inertial acceleration under thrust, gravity and linear drag.
pub fn translational_accel(state: &RigidState, thrust: f64, params: &VehicleParams) -> Result<Vector3<f64>> {
    check_attitude_domain(&state.attitude)?;
    let (sf, cf) = state.attitude.x.sin_cos();
    let (st, ct) = state.attitude.y.sin_cos();
    let (sp, cp) = state.attitude.z.sin_cos();
    let thrust_axis = Vector3::new(cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct);
    let drag = params.drag.component_mul(&state.velocity) / params.mass;
    Ok(thrust_axis * (thrust / params.mass) - Vector3::new(0.0, 0.0, params.gravity) - drag)
}

/// Drift term `F` of the attitude model for the given Euler rates.
pub fn attitude_drift(rates: &Vector3<f64>, relative_rotor_speed: f64, params: &VehicleParams) -> Vector3<f64> {
    let [xi1, xi2, xi3, xi4, xi5] = params.inertia_ratios();
    let (dphi, dtheta, dpsi) = (rates.x, rates.y, rates.z);
    Vector3::new(
        xi1 * dtheta * dpsi - xi2 * relative_rotor_speed * dtheta,
        xi3 * dphi * dpsi + xi4 * relative_rotor_speed * dphi,
        xi5 * dphi * dtheta,
    )
}

/// Input gain `G = (1/Jxx, 1/Jyy, 1/Jzz)` of the attitude model.
pub fn attitude_input_gain(params: &VehicleParams) -> Vector3<f64> {
    params.inertia.map(|j| 1.0 / j)
}

/// Euler-angle accelerations `F + G u + h` of the nominal attitude model.
pub fn attitude_accel(
    state: &RigidState,
    moments: &Vector3<f64>,
    relative_rotor_speed: f64,
    params: &VehicleParams,
    lumped: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    check_attitude_domain(&state.attitude)?;
    let drift = attitude_drift(&state.attitude_rate, relative_rotor_speed, params);
    Ok(drift + attitude_input_gain(params).component_mul(moments) + lumped)
}

/// Angular-acceleration disturbance caused by the unknown inertia part,
/// `J0^-1 [ -w x (J_delta w) - J_delta w_dot ]` with `w` the body rate.
pub fn lumped_uncertainty(rates: &Vector3<f64>, rates_dot: &Vector3<f64>, params: &VehicleParams) -> Vector3<f64> {
    let delta = params.inertia_delta;
    let coriolis = -rates.cross(&delta.component_mul(rates));
    (coriolis - delta.component_mul(rates_dot)).component_div(&params.inertia)
}

/// Body angular acceleration of the rigid body with the full inertia
/// `J0 + J_delta`, including the rotor gyroscopic moment.
pub fn true_attitude_accel(rates: &Vector3<f64>, moments: &Vector3<f64>, relative_rotor_speed: f64, params: &VehicleParams) -> Vector3<f64> {
    let inertia = params.inertia + params.inertia_delta;
    let gyro = Vector3::new(rates.y, -rates.x, 0.0) * (params.rotor_inertia * relative_rotor_speed);
    let torque = -rates.cross(&inertia.component_mul(rates)) + moments - gyro;
    torque.component_div(&inertia)
}
