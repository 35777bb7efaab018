//! Desired-trajectory generators.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Desired position and attitude with first and second time derivatives.
///
/// Generators fill only yaw in the attitude fields; roll and pitch are
/// produced by the position loop at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectorySample {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub attitude: Vector3<f64>,
    pub attitude_rate: Vector3<f64>,
    pub attitude_accel: Vector3<f64>,
}

/// `1 - exp(-k t^3)` and its first two derivatives.
fn soft_start(k: f64, t: f64) -> (f64, f64, f64) {
    let e = (-k * t.powi(3)).exp();
    let v = -(-k * t.powi(3)).exp_m1();
    (v, 3.0 * k * t * t * e, (6.0 * k * t - 9.0 * k * k * t.powi(4)) * e)
}

/// `1 + a(t) cos t` with a soft-start amplitude.
fn ramped_cos(k: f64, t: f64) -> (f64, f64, f64) {
    let (a, da, dda) = soft_start(k, t);
    let (s, c) = t.sin_cos();
    (1.0 + a * c, da * c - a * s, dda * c - 2.0 * da * s - a * c)
}

/// `1 + a(t) sin t` with a soft-start amplitude.
fn ramped_sin(k: f64, t: f64) -> (f64, f64, f64) {
    let (a, da, dda) = soft_start(k, t);
    let (s, c) = t.sin_cos();
    (1.0 + a * s, da * s + a * c, dda * s + 2.0 * da * c - a * s)
}

/// `1 + a(t) sin t cos t = 1 + a(t) sin(2t) / 2`.
fn ramped_bow(k: f64, t: f64) -> (f64, f64, f64) {
    let (a, da, dda) = soft_start(k, t);
    let (s, c) = (2.0 * t).sin_cos();
    (1.0 + 0.5 * a * s, 0.5 * da * s + a * c, 0.5 * dda * s + 2.0 * da * c - 2.0 * a * s)
}

/// `offset + ramp t + amplitude sin(frequency t + phase)` on one channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Harmonic {
    pub offset: f64,
    pub ramp: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Harmonic {
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let w = self.frequency;
        let (s, c) = (w * t + self.phase).sin_cos();
        (
            self.offset + self.ramp * t + self.amplitude * s,
            self.ramp + self.amplitude * w * c,
            -self.amplitude * w * w * s,
        )
    }

    fn validate(&self) -> Result<()> {
        if [self.offset, self.ramp, self.amplitude, self.frequency, self.phase].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("custom trajectory coefficients must be finite".into()))
        }
    }
}

/// User-defined trajectory with one harmonic channel per axis and for yaw.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CustomTrajectory {
    pub axes: [Harmonic; 3],
    pub yaw: Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trajectory {
    Orbital,
    Helix,
    Bow,
    Custom(CustomTrajectory),
}

impl Trajectory {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Orbital => "orbital",
            Self::Helix => "helix",
            Self::Bow => "bow",
            Self::Custom(_) => "custom",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Custom(c) => c.axes.iter().chain(std::iter::once(&c.yaw)).try_for_each(Harmonic::validate),
            _ => Ok(()),
        }
    }

    pub fn sample(&self, t: f64) -> TrajectorySample {
        let (x, y, z, yaw) = match self {
            Self::Orbital => (ramped_cos(3.0, t), ramped_sin(5.0, t), {
                let (s, c) = t.sin_cos();
                (0.1 + 0.1 * s, 0.1 * c, -0.1 * s)
            }, (0.0, 0.0, 0.0)),
            Self::Helix => (ramped_cos(3.0, t), ramped_sin(5.0, t), (0.1 + t / 50.0, 1.0 / 50.0, 0.0), (0.0, 0.0, 0.0)),
            Self::Bow => (ramped_cos(3.0, t), ramped_bow(5.0, t), {
                let (s, c) = t.sin_cos();
                (0.1 + 0.1 * c, -0.1 * s, -0.1 * c)
            }, (0.0, 0.0, 0.0)),
            Self::Custom(c) => (c.axes[0].eval(t), c.axes[1].eval(t), c.axes[2].eval(t), c.yaw.eval(t)),
        };
        TrajectorySample {
            position: Vector3::new(x.0, y.0, z.0),
            velocity: Vector3::new(x.1, y.1, z.1),
            acceleration: Vector3::new(x.2, y.2, z.2),
            attitude: Vector3::new(0.0, 0.0, yaw.0),
            attitude_rate: Vector3::new(0.0, 0.0, yaw.1),
            attitude_accel: Vector3::new(0.0, 0.0, yaw.2),
        }
    }
}
