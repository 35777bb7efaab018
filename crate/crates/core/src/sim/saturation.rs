//! Actuator limits on net thrust and body moments.

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::vehicle::ControlInputs;

pub const FLAG_THRUST: u8 = 1;
pub const FLAG_ROLL: u8 = 2;
pub const FLAG_PITCH: u8 = 4;
pub const FLAG_YAW: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturationLimits {
    /// Maximum net thrust (N); thrust is also floored at zero.
    pub thrust_max: f64,
    /// Symmetric limit on each body moment (N m).
    pub moment_max: f64,
}

impl SaturationLimits {
    pub fn new(thrust_max: f64, moment_max: f64) -> Result<Self> {
        if !(thrust_max > 0.0 && moment_max > 0.0) {
            return Err(Error::InvalidParameter("saturation limits must be positive".into()));
        }
        Ok(Self { thrust_max, moment_max })
    }

    /// No clamping at all.
    pub fn unlimited() -> Self {
        Self {
            thrust_max: f64::INFINITY,
            moment_max: f64::INFINITY,
        }
    }
}

impl Default for SaturationLimits {
    fn default() -> Self {
        Self {
            thrust_max: 15.0,
            moment_max: 3.0,
        }
    }
}

/// Clamp a demand to the limits. The returned bit set marks the active clamps.
pub fn saturate(demand: &ControlInputs, limits: &SaturationLimits) -> (ControlInputs, u8) {
    let mut flags = 0;
    let thrust = demand.thrust.clamp(0.0, limits.thrust_max);
    if thrust != demand.thrust {
        flags |= FLAG_THRUST;
    }
    let mut moments = Vector3::zeros();
    for (axis, flag) in [FLAG_ROLL, FLAG_PITCH, FLAG_YAW].into_iter().enumerate() {
        moments[axis] = demand.moments[axis].clamp(-limits.moment_max, limits.moment_max);
        if moments[axis] != demand.moments[axis] {
            flags |= flag;
        }
    }
    (ControlInputs::new(thrust, moments), flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_and_flags() {
        let limits = SaturationLimits::default();
        let (u, flags) = saturate(&ControlInputs::new(20.0, Vector3::zeros()), &limits);
        assert_eq!(u.thrust, 15.0);
        assert_eq!(flags, FLAG_THRUST);

        let inside = ControlInputs::new(4.0, Vector3::new(0.1, -0.2, 0.01));
        assert_eq!(saturate(&inside, &limits), (inside, 0));

        let (u, flags) = saturate(&ControlInputs::new(4.0, Vector3::new(-5.0, 0.0, 3.5)), &limits);
        assert_eq!(u.moments, Vector3::new(-3.0, 0.0, 3.0));
        assert_eq!(flags, FLAG_ROLL | FLAG_YAW);

        let (u, flags) = saturate(&ControlInputs::new(-1.0, Vector3::zeros()), &limits);
        assert_eq!((u.thrust, flags), (0.0, FLAG_THRUST));
        assert!(SaturationLimits::new(0.0, 1.0).is_err());
    }
}
