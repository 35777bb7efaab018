//! Scenario definitions: trajectory, constraints, gains, initial condition,
//! uncertainty model and actuator limits.

use nalgebra::Vector3;
use serde::Serialize;

use super::saturation::SaturationLimits;
use super::trajectory::{Trajectory, TrajectorySample};
use crate::attitude::{AttitudeBounds, AttitudeGains, FirstOrderTracker};
use crate::barrier::ErrorBounds;
use crate::error::{Error, Result};
use crate::position::{self, AxisBounds, PositionGains};
use crate::vehicle::VehicleParams;

pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];
pub const ANGLE_NAMES: [&str; 3] = ["phi", "theta", "psi"];

/// Symmetric limits `|p| < L`, `|Theta| < Q` and the asymmetric error bounds used by the controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSpec {
    pub position_limits: Vector3<f64>,
    pub attitude_limits: Vector3<f64>,
    pub position_bounds: [AxisBounds; 3],
    pub attitude_bounds: [AttitudeBounds; 3],
}

fn bounds(lower: f64, upper: f64) -> ErrorBounds {
    ErrorBounds { lower, upper }
}

impl ConstraintSpec {
    pub fn orbital() -> Self {
        Self {
            position_limits: Vector3::new(2.2, 3.3, 0.4),
            attitude_limits: Vector3::new(0.5, 0.6, 0.2),
            position_bounds: [bounds(2.2, 0.2), bounds(1.3, 0.3), bounds(0.3, 0.2)],
            attitude_bounds: [bounds(0.08, 0.23), bounds(0.20, 0.11), bounds(0.20, 0.20)],
        }
    }

    pub fn helix() -> Self {
        Self {
            position_limits: Vector3::new(2.2, 3.3, 0.7),
            position_bounds: [bounds(2.2, 0.2), bounds(2.3, 0.3), bounds(0.6, 0.2)],
            ..Self::orbital()
        }
    }

    pub fn bow() -> Self {
        Self {
            position_limits: Vector3::new(2.2, 2.8, 0.4),
            attitude_limits: Vector3::new(2.2, 0.6, 0.2),
            position_bounds: [bounds(2.2, 0.2), bounds(1.3, 0.3), bounds(0.6, 0.2)],
            attitude_bounds: [bounds(0.25, 0.20), bounds(0.20, 0.11), bounds(0.20, 0.20)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in self.position_bounds.iter().chain(self.attitude_bounds.iter()) {
            ErrorBounds::new(b.lower, b.upper)?;
        }
        if self.position_limits.iter().chain(self.attitude_limits.iter()).any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter("constraint limits must be positive".into()));
        }
        Ok(())
    }
}

/// Where the truth model's attitude disturbance comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Uncertainty {
    None,
    /// `h = h0 C(Theta_dot)` injected directly into the attitude model.
    Matched { h0: Vector3<f64> },
    /// Full rigid-body rotation with inertia `J0 + J_delta`.
    Physical,
}

impl Uncertainty {
    pub const DEFAULT_H0: f64 = 0.2;

    pub fn matched_default() -> Self {
        Self::Matched {
            h0: Vector3::repeat(Self::DEFAULT_H0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Matched { .. } => "matched",
            Self::Physical => "physical",
        }
    }

    /// The constant the adaptive estimate should converge to, where one exists.
    pub fn h0(&self) -> Vector3<f64> {
        match self {
            Self::Matched { h0 } => *h0,
            _ => Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Zero,
    FirstOrder { time_constant: f64 },
}

/// How the closed loop is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fidelity {
    /// Discrete controller with zero-order hold, thrust acting through the actual
    /// attitude, actuator saturation and rotor allocation.
    Cascade,
    /// Continuous controller on the idealized error dynamics under which the
    /// Lyapunov guarantees hold: the position loop's acceleration demand is realized exactly,
    /// the attitude loop tracks the feedforward attitude, no actuator limits.
    TheoryExact,
}

/// Initial deviation from the desired trajectory at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InitialCondition {
    /// `p(0) - p_d(0)`.
    pub position_error: Vector3<f64>,
    /// Inertial velocity `p_dot(0)`.
    pub velocity: Vector3<f64>,
    /// `Theta(0) - Theta_d(0)`.
    pub attitude_error: Vector3<f64>,
    /// Euler rates `Theta_dot(0)`.
    pub attitude_rate: Vector3<f64>,
}

impl InitialCondition {
    /// At rest with the errors placed at `fraction` of each upper bound.
    pub fn upper_fraction(constraints: &ConstraintSpec, fraction: f64) -> Self {
        Self {
            position_error: Vector3::from_fn(|i, _| fraction * constraints.position_bounds[i].upper),
            attitude_error: Vector3::from_fn(|i, _| fraction * constraints.attitude_bounds[i].upper),
            ..Self::default()
        }
    }

    /// At rest with the errors placed at `fraction` of each lower bound (negative side).
    pub fn lower_fraction(constraints: &ConstraintSpec, fraction: f64) -> Self {
        Self {
            position_error: Vector3::from_fn(|i, _| -fraction * constraints.position_bounds[i].lower),
            attitude_error: Vector3::from_fn(|i, _| -fraction * constraints.attitude_bounds[i].lower),
            ..Self::default()
        }
    }
}

/// Extremes of a reference channel over the run: `-lower <= value <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

impl Envelope {
    fn empty() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::NEG_INFINITY,
        }
    }

    fn include(&mut self, value: f64) {
        self.lower = self.lower.max(-value);
        self.upper = self.upper.max(value);
    }
}

/// Reference envelopes sampled on the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelopes {
    pub position: [Envelope; 3],
    pub attitude: [Envelope; 3],
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub trajectory: Trajectory,
    pub duration: f64,
    pub dt: f64,
    pub params: VehicleParams,
    pub constraints: ConstraintSpec,
    pub position_gains: PositionGains,
    pub attitude_gains: AttitudeGains,
    pub initial: InitialCondition,
    pub uncertainty: Uncertainty,
    pub estimator: EstimatorKind,
    /// `None` disables clamping.
    pub saturation: Option<SaturationLimits>,
    pub fidelity: Fidelity,
}

impl Scenario {
    pub const DEFAULT_DT: f64 = 1e-3;
    pub const DEFAULT_DURATION: f64 = 60.0;

    fn with(trajectory: Trajectory, constraints: ConstraintSpec) -> Self {
        Self {
            trajectory,
            duration: Self::DEFAULT_DURATION,
            dt: Self::DEFAULT_DT,
            params: VehicleParams::pelican(),
            constraints,
            position_gains: PositionGains::default(),
            attitude_gains: AttitudeGains::default(),
            initial: InitialCondition::default(),
            uncertainty: Uncertainty::matched_default(),
            estimator: EstimatorKind::FirstOrder {
                time_constant: FirstOrderTracker::DEFAULT_TIME_CONSTANT,
            },
            saturation: Some(SaturationLimits::default()),
            fidelity: Fidelity::Cascade,
        }
    }

    pub fn orbital() -> Self {
        Self::with(Trajectory::Orbital, ConstraintSpec::orbital())
    }

    pub fn helix() -> Self {
        Self::with(Trajectory::Helix, ConstraintSpec::helix())
    }

    pub fn bow() -> Self {
        Self::with(Trajectory::Bow, ConstraintSpec::bow())
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "orbital" => Some(Self::orbital()),
            "helix" => Some(Self::helix()),
            "bow" => Some(Self::bow()),
            _ => None,
        }
    }

    /// The idealized closed loop with matched uncertainty and no actuator limits.
    pub fn into_theory_exact(mut self) -> Self {
        self.fidelity = Fidelity::TheoryExact;
        self.saturation = None;
        if !matches!(self.uncertainty, Uncertainty::Matched { .. }) {
            self.uncertainty = Uncertainty::matched_default();
        }
        self.estimator = EstimatorKind::Zero;
        self
    }

    pub fn name(&self) -> &'static str {
        self.trajectory.name()
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Checks everything that must hold before integration starts.
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration {} must be at least one time step",
                self.duration
            )));
        }
        self.params.validate()?;
        self.constraints.validate()?;
        self.position_gains.validate()?;
        self.attitude_gains.validate()?;
        self.trajectory.validate()?;
        if let Some(limits) = &self.saturation {
            SaturationLimits::new(limits.thrust_max, limits.moment_max)?;
        }
        if let Uncertainty::Matched { h0 } = &self.uncertainty {
            if h0.iter().any(|h| !h.is_finite()) {
                return Err(Error::InvalidParameter("matched uncertainty must be finite".into()));
            }
        }
        if let EstimatorKind::FirstOrder { time_constant } = self.estimator {
            if !(time_constant > 0.0 && time_constant.is_finite()) {
                return Err(Error::InvalidParameter("estimator time constant must be positive".into()));
            }
        }
        let init = &self.initial;
        for v in [init.position_error, init.velocity, init.attitude_error, init.attitude_rate] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("initial condition must be finite".into()));
            }
        }
        for axis in 0..3 {
            if !self.constraints.position_bounds[axis].contains(init.position_error[axis]) {
                return Err(Error::InvalidParameter(format!(
                    "initial {} error {} is outside its bounds",
                    AXIS_NAMES[axis], init.position_error[axis]
                )));
            }
            if !self.constraints.attitude_bounds[axis].contains(init.attitude_error[axis]) {
                return Err(Error::InvalidParameter(format!(
                    "initial {} error {} is outside its bounds",
                    ANGLE_NAMES[axis], init.attitude_error[axis]
                )));
            }
        }
        Ok(())
    }

    /// Feedforward attitude, i.e. the attitude the position loop demands with zero tracking error.
    pub fn feedforward_attitude(&self, sample: &TrajectorySample) -> Result<Vector3<f64>> {
        feedforward_attitude(sample, &self.params)
    }

    /// Samples position and feedforward-attitude references on the simulation grid.
    pub fn envelopes(&self) -> Result<Envelopes> {
        let mut position = [Envelope::empty(); 3];
        let mut attitude = [Envelope::empty(); 3];
        for k in 0..=self.steps() {
            let sample = self.trajectory.sample(k as f64 * self.dt);
            let theta = self.feedforward_attitude(&sample)?;
            for axis in 0..3 {
                position[axis].include(sample.position[axis]);
                attitude[axis].include(theta[axis]);
            }
        }
        Ok(Envelopes { position, attitude })
    }

    /// Axes whose bounds are not implied by their limit and the sampled reference envelope,
    /// i.e. where `bound + envelope <= limit` fails on either side.
    pub fn assumption_warnings(&self, env: &Envelopes) -> Vec<String> {
        let mut warnings = Vec::new();
        let c = &self.constraints;
        for axis in 0..3 {
            let mut check = |name: &str, bounds: &ErrorBounds, env: &Envelope, limit: f64| {
                if bounds.lower + env.lower > limit || bounds.upper + env.upper > limit {
                    warnings.push(format!(
                        "{name}: bounds (-{}, {}) with reference range [{}, {}] exceed the limit {}",
                        bounds.lower, bounds.upper, -env.lower, env.upper, limit
                    ));
                }
            };
            check(AXIS_NAMES[axis], &c.position_bounds[axis], &env.position[axis], c.position_limits[axis]);
            check(ANGLE_NAMES[axis], &c.attitude_bounds[axis], &env.attitude[axis], c.attitude_limits[axis]);
        }
        warnings
    }
}

pub fn feedforward_attitude(sample: &TrajectorySample, params: &VehicleParams) -> Result<Vector3<f64>> {
    let delta = sample.acceleration + params.drag.component_mul(&sample.velocity) / params.mass;
    let thrust = position::extract_thrust(&delta, params);
    let (roll, pitch) = position::desired_attitude(&delta, sample.attitude.z, thrust, params)?;
    Ok(Vector3::new(roll, pitch, sample.attitude.z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_fixtures() {
        let h = Scenario::helix();
        assert_eq!(h.constraints.position_bounds[1], bounds(2.3, 0.3));
        assert_eq!(h.constraints.position_bounds[2], bounds(0.6, 0.2));
        assert_eq!(h.constraints.position_limits.z, 0.7);
        let o = Scenario::orbital();
        assert_eq!(o.constraints.position_bounds[1], bounds(1.3, 0.3));
        assert_eq!(o.constraints.attitude_bounds[0], bounds(0.08, 0.23));
        assert_eq!(Scenario::bow().constraints.attitude_bounds[0], bounds(0.25, 0.20));
        assert_eq!(o.steps(), 60_000);
    }

    #[test]
    fn rejects_initial_error_outside_bounds() {
        let mut s = Scenario::orbital();
        s.initial.position_error.x = 0.25;
        assert!(s.validate().is_err());
        s.initial.position_error.x = -2.0;
        assert!(s.validate().is_ok());
        s.initial.attitude_error.y = -0.2;
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_bad_timing() {
        let mut s = Scenario::orbital();
        s.dt = 0.0;
        assert!(s.validate().is_err());
        s.dt = 1.0;
        s.duration = 0.5;
        assert!(s.validate().is_err());
    }

    fn flagged(s: &Scenario) -> Vec<String> {
        s.assumption_warnings(&s.envelopes().unwrap())
            .iter()
            .map(|w| w.split(':').next().unwrap().to_string())
            .collect()
    }

    #[test]
    fn orbital_envelope_matches_default_bounds() {
        let mut s = Scenario::orbital();
        s.dt = 1e-2;
        let env = s.envelopes().unwrap();
        assert!(env.position[0].upper <= 2.0 && env.position[0].upper > 1.99);
        assert!(env.position[2].lower <= 0.0);
        // The soft start tilts the feedforward attitude close to half a radian.
        assert_eq!(flagged(&s), ["phi", "theta"]);
    }

    #[test]
    fn helix_and_bow_flag_vertical_axis() {
        let mut s = Scenario::helix();
        s.dt = 1e-2;
        assert!(flagged(&s).contains(&"z".to_string()));
        let mut s = Scenario::bow();
        s.dt = 1e-2;
        assert_eq!(flagged(&s), ["theta", "z"]);
    }
}
