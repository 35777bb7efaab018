//! Closed-loop simulation and its verification record.

use nalgebra::{SVector, Vector3};
use serde::Serialize;

use super::integrator::rk4_step;
use super::saturation::{saturate, SaturationLimits};
use super::scenario::{feedforward_attitude, Envelopes, EstimatorKind, Fidelity, Scenario, Uncertainty, ANGLE_NAMES, AXIS_NAMES};
use super::trajectory::TrajectorySample;
use crate::attitude::{self, AttitudeDemand, AttitudeLoopState, DisturbanceEstimator, FirstOrderTracker, ZeroEstimator};
use crate::barrier::Confinement;
use crate::error::{Error, Result};
use crate::position::{self, AxisDemand, PositionLoopState};
use crate::vehicle::{self, ControlInputs, RigidState, RotorSpeeds};

/// Rigid states followed by the three adaptive estimates.
pub type FullState = SVector<f64, 15>;

/// Ratio of the identity error to its tolerance `max(1e-6, 1e-3 |rhs|)`.
pub const IDENTITY_ABS_TOL: f64 = 1e-6;
pub const IDENTITY_REL_TOL: f64 = 1e-3;
/// Allowed per-step increase of a Lyapunov value before it counts as an increase.
pub const MONOTONICITY_TOL: f64 = 1e-9;
/// Step of the five-point stencil differentiating the feedforward attitude.
const STENCIL_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Record every n-th step; 0 records nothing.
    pub record_every: usize,
    /// Tracking errors after this time count towards the steady-state maxima.
    pub settle_time: f64,
    /// Instants per axis at which the Lyapunov-rate identity is checked (idealized loop only).
    pub identity_samples: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_every: 10,
            settle_time: 20.0,
            identity_samples: 50,
        }
    }
}

/// One telemetry sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRow {
    pub t: f64,
    pub state: RigidState,
    pub desired_position: Vector3<f64>,
    pub desired_attitude: Vector3<f64>,
    pub position_error: Vector3<f64>,
    pub attitude_error: Vector3<f64>,
    pub virtual_control: Vector3<f64>,
    /// Inputs applied to the plant after saturation.
    pub inputs: ControlInputs,
    pub rotors: RotorSpeeds,
    pub position_energy: Vector3<f64>,
    pub attitude_energy: Vector3<f64>,
    pub h_bar: Vector3<f64>,
    pub saturation_flags: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisConfinement {
    pub axis: &'static str,
    /// Interval computed from the initial Lyapunov value and the reference envelope.
    pub interval: (f64, f64),
    pub limit: f64,
    /// Strict inclusion of `interval` in `(-limit, limit)`.
    pub within_limit: bool,
    /// Whether the bounds are implied by the limit and the reference envelope.
    pub assumptions_hold: bool,
    /// Samples outside `interval`.
    pub violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityAxis {
    pub axis: &'static str,
    pub samples: usize,
    pub failures: usize,
    /// Largest `|fd - rhs| / tolerance` seen.
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub position: [IdentityAxis; 3],
    pub attitude: [IdentityAxis; 3],
}

impl IdentityReport {
    pub fn passed(&self, min_samples: usize) -> bool {
        self.position
            .iter()
            .chain(self.attitude.iter())
            .all(|a| a.failures == 0 && a.samples >= min_samples)
    }
}

/// Summary of a run, serialized as the machine-readable report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub fidelity: Fidelity,
    pub uncertainty: &'static str,
    pub dt: f64,
    pub duration: f64,
    pub steps_completed: usize,
    pub completed: bool,
    pub abort_reason: Option<String>,
    pub bound_violations: usize,
    pub max_position_error: [f64; 3],
    pub max_attitude_error: [f64; 3],
    pub settle_time: f64,
    pub max_position_error_settled: [f64; 3],
    pub max_attitude_error_settled: [f64; 3],
    pub terminal_position_error: [f64; 3],
    pub terminal_attitude_error: [f64; 3],
    pub position_energy_increases: [usize; 3],
    pub attitude_energy_increases: [usize; 3],
    pub saturated_steps: usize,
    pub saturation_duty: f64,
    pub first_saturation_time: Option<f64>,
    pub last_saturation_time: Option<f64>,
    /// Time of the largest thrust deviation from hover `|u_T - m g|` (s).
    pub peak_thrust_time: f64,
    /// Time of the largest commanded moment magnitude (s).
    pub peak_moment_time: f64,
    pub max_abs_h_bar: [f64; 3],
    pub initial_position_energy: [f64; 3],
    pub initial_attitude_energy: [f64; 3],
    pub envelopes: Envelopes,
    pub position_confinement: [AxisConfinement; 3],
    pub attitude_confinement: [AxisConfinement; 3],
    pub identity: Option<IdentityReport>,
    pub assumption_warnings: Vec<String>,
}

impl VerificationReport {
    /// Completed without touching a bound.
    pub fn passed(&self) -> bool {
        self.completed && self.bound_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub telemetry: Vec<TelemetryRow>,
    pub report: VerificationReport,
}

/// Desired attitude with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct AttitudeReference {
    angle: Vector3<f64>,
    rate: Vector3<f64>,
    accel: Vector3<f64>,
}

impl AttitudeReference {
    /// Linear extrapolation over a held step.
    fn advanced(&self, tau: f64) -> Self {
        Self {
            angle: self.angle + self.rate * tau,
            rate: self.rate + self.accel * tau,
            accel: self.accel,
        }
    }
}

/// Position-loop output at an instant.
#[derive(Debug, Clone, Copy)]
struct OuterLoop {
    sample: TrajectorySample,
    gamma: Vector3<f64>,
    gamma_dot: Vector3<f64>,
    delta: Vector3<f64>,
    thrust: f64,
    attitude: Vector3<f64>,
}

fn rigid(y: &FullState) -> RigidState {
    RigidState::from_slice(&y.as_slice()[..12])
}

fn h_bar(y: &FullState) -> Vector3<f64> {
    Vector3::new(y[12], y[13], y[14])
}

struct Engine<'a> {
    s: &'a Scenario,
    h0: Vector3<f64>,
    reference_cache: Vec<(f64, AttitudeReference)>,
}

impl<'a> Engine<'a> {
    fn new(s: &'a Scenario) -> Self {
        Self {
            s,
            h0: s.uncertainty.h0(),
            reference_cache: Vec::with_capacity(4),
        }
    }

    fn outer(&self, t: f64, state: &RigidState) -> Result<OuterLoop> {
        let s = self.s;
        let sample = s.trajectory.sample(t);
        let gamma = state.position - sample.position;
        let gamma_dot = state.velocity - sample.velocity;
        let demands: [AxisDemand; 3] = std::array::from_fn(|i| AxisDemand {
            gamma: gamma[i],
            gamma_dot: gamma_dot[i],
            velocity: state.velocity[i],
            reference_accel: sample.acceleration[i],
        });
        let delta = position::virtual_controls(&demands, &s.constraints.position_bounds, &s.position_gains, &s.params)?;
        let thrust = position::extract_thrust(&delta, &s.params);
        let (roll, pitch) = position::desired_attitude(&delta, sample.attitude.z, thrust, &s.params)?;
        Ok(OuterLoop {
            sample,
            gamma,
            gamma_dot,
            delta,
            thrust,
            attitude: Vector3::new(roll, pitch, sample.attitude.z),
        })
    }

    fn position_loops(&self, outer: &OuterLoop) -> Result<[PositionLoopState; 3]> {
        let s = self.s;
        let mut loops = [PositionLoopState {
            gamma: 0.0,
            gamma_dot: 0.0,
            zeta: 0.0,
            barrier: 0.0,
            energy: 0.0,
        }; 3];
        for (axis, slot) in loops.iter_mut().enumerate() {
            *slot = PositionLoopState::new(
                outer.gamma[axis],
                outer.gamma_dot[axis],
                &s.constraints.position_bounds[axis],
                s.position_gains.stabilizer[axis],
            )?;
        }
        Ok(loops)
    }

    fn attitude_loops(&self, state: &RigidState, reference: &AttitudeReference, h_bar: &Vector3<f64>) -> Result<[AttitudeLoopState; 3]> {
        let s = self.s;
        let mut loops = [AttitudeLoopState {
            upsilon: 0.0,
            upsilon_dot: 0.0,
            lambda: 0.0,
            barrier: 0.0,
            energy: 0.0,
        }; 3];
        for (axis, slot) in loops.iter_mut().enumerate() {
            *slot = AttitudeLoopState::new(
                state.attitude[axis] - reference.angle[axis],
                state.attitude_rate[axis] - reference.rate[axis],
                &s.constraints.attitude_bounds[axis],
                s.attitude_gains.stabilizer[axis],
                self.h0[axis] - h_bar[axis],
            )?;
        }
        Ok(loops)
    }

    fn moments(
        &self,
        state: &RigidState,
        reference: &AttitudeReference,
        h_hat: &Vector3<f64>,
        h_bar: &Vector3<f64>,
        omega_r: f64,
    ) -> Result<Vector3<f64>> {
        let s = self.s;
        let drift = vehicle::attitude_drift(&state.attitude_rate, omega_r, &s.params);
        let gain = vehicle::attitude_input_gain(&s.params);
        let mut moments = Vector3::zeros();
        for axis in 0..3 {
            let demand = AttitudeDemand {
                upsilon: state.attitude[axis] - reference.angle[axis],
                upsilon_dot: state.attitude_rate[axis] - reference.rate[axis],
                rate: state.attitude_rate[axis],
                reference_accel: reference.accel[axis],
                drift: drift[axis],
                input_gain: gain[axis],
                h_hat: h_hat[axis],
                h_bar: h_bar[axis],
            };
            moments[axis] = attitude::attitude_moment(
                &demand,
                &s.constraints.attitude_bounds[axis],
                s.attitude_gains.stabilizer[axis],
                s.attitude_gains.damping[axis],
            )?;
        }
        Ok(moments)
    }

    /// Adaptation rates `lambda C(Theta_dot)`.
    fn adaptation(&self, state: &RigidState, reference: &AttitudeReference) -> Result<Vector3<f64>> {
        let s = self.s;
        let mut rates = Vector3::zeros();
        for axis in 0..3 {
            rates[axis] = attitude::adaptation_rate(
                state.attitude[axis] - reference.angle[axis],
                state.attitude_rate[axis] - reference.rate[axis],
                state.attitude_rate[axis],
                &s.constraints.attitude_bounds[axis],
                s.attitude_gains.stabilizer[axis],
            )?;
        }
        Ok(rates)
    }

    /// Euler accelerations of the truth model.
    fn attitude_truth(&self, state: &RigidState, moments: &Vector3<f64>, omega_r: f64) -> Result<Vector3<f64>> {
        let p = &self.s.params;
        match self.s.uncertainty {
            Uncertainty::None => vehicle::attitude_accel(state, moments, omega_r, p, &Vector3::zeros()),
            Uncertainty::Matched { h0 } => {
                let lumped = h0.component_mul(&state.attitude_rate.map(attitude::regressor));
                vehicle::attitude_accel(state, moments, omega_r, p, &lumped)
            }
            Uncertainty::Physical => {
                vehicle::check_attitude_domain(&state.attitude)?;
                Ok(vehicle::true_attitude_accel(&state.attitude_rate, moments, omega_r, p))
            }
        }
    }

    /// Feedforward attitude and its derivatives by five-point stencils.
    fn feedforward(&mut self, t: f64) -> Result<AttitudeReference> {
        if let Some((_, r)) = self.reference_cache.iter().find(|(tc, _)| *tc == t) {
            return Ok(*r);
        }
        let h = STENCIL_STEP;
        let f = |tau: f64| feedforward_attitude(&self.s.trajectory.sample(tau), &self.s.params);
        let (m2, m1, c, p1, p2) = (f(t - 2.0 * h)?, f(t - h)?, f(t)?, f(t + h)?, f(t + 2.0 * h)?);
        let reference = AttitudeReference {
            angle: c,
            rate: (m2 - p2 + (p1 - m1) * 8.0) / (12.0 * h),
            accel: ((p1 + m1) * 16.0 - (p2 + m2) - c * 30.0) / (12.0 * h * h),
        };
        if self.reference_cache.len() >= 4 {
            self.reference_cache.remove(0);
        }
        self.reference_cache.push((t, reference));
        Ok(reference)
    }
}

fn zero_axes<T: Copy>(names: [&'static str; 3], f: impl Fn(&'static str) -> T) -> [T; 3] {
    names.map(f)
}

struct IdentityTracker {
    stride: usize,
    offset: usize,
    axes: [IdentityAxis; 6],
    // Energies at steps k-2, k-1 and the rate predicted at k-1.
    history: [Option<([f64; 6], [f64; 6])>; 2],
}

impl IdentityTracker {
    fn new(steps: usize, samples: usize) -> Self {
        let samples = samples.max(1);
        let stride = (steps / (samples + 1)).max(1);
        let names = ["x", "y", "z", "phi", "theta", "psi"];
        Self {
            stride,
            offset: stride,
            axes: names.map(|axis| IdentityAxis {
                axis,
                samples: 0,
                failures: 0,
                worst_ratio: 0.0,
            }),
            history: [None, None],
        }
    }

    /// Feed step `k`; checks step `k - 1` when it is a sample instant.
    fn push(&mut self, k: usize, dt: f64, energy: [f64; 6], rate: [f64; 6]) {
        if let (Some((e_prev2, _)), Some((_, rate_prev))) = (self.history[0], self.history[1]) {
            let center = k - 1;
            if center >= self.offset && (center - self.offset).is_multiple_of(self.stride) {
                for i in 0..6 {
                    let fd = (energy[i] - e_prev2[i]) / (2.0 * dt);
                    let tol = IDENTITY_ABS_TOL.max(IDENTITY_REL_TOL * rate_prev[i].abs());
                    let ratio = (fd - rate_prev[i]).abs() / tol;
                    let axis = &mut self.axes[i];
                    axis.samples += 1;
                    if ratio > 1.0 {
                        axis.failures += 1;
                    }
                    axis.worst_ratio = axis.worst_ratio.max(ratio);
                }
            }
        }
        self.history = [self.history[1], Some((energy, rate))];
    }

    fn report(&self) -> IdentityReport {
        IdentityReport {
            position: [self.axes[0], self.axes[1], self.axes[2]],
            attitude: [self.axes[3], self.axes[4], self.axes[5]],
        }
    }
}

/// Integrate the closed loop of `scenario`.
///
/// Configuration problems are returned as errors before integration starts.
/// A bound breach, a model-domain breach or an infeasible allocation during the
/// run stops it and is recorded in the report.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput> {
    scenario.validate()?;
    let envelopes = scenario.envelopes()?;
    let assumption_warnings = scenario.assumption_warnings(&envelopes);
    let mut engine = Engine::new(scenario);
    let s = scenario;
    let steps = s.steps();
    let dt = s.dt;

    // Initial state relative to the reference at t = 0.
    let init = &s.initial;
    let mut start = RigidState {
        position: s.trajectory.sample(0.0).position + init.position_error,
        velocity: init.velocity,
        attitude: Vector3::zeros(),
        attitude_rate: init.attitude_rate,
    };
    let reference0 = match s.fidelity {
        Fidelity::Cascade => engine.outer(0.0, &start)?.attitude,
        Fidelity::TheoryExact => engine.feedforward(0.0)?.angle,
    };
    start.attitude = reference0 + init.attitude_error;
    start.check_domain()?;
    let mut y = FullState::zeros();
    y.as_mut_slice()[..12].copy_from_slice(&start.to_array());

    let mut estimator: Box<dyn DisturbanceEstimator> = match s.estimator {
        EstimatorKind::Zero => Box::new(ZeroEstimator),
        EstimatorKind::FirstOrder { time_constant } => Box::new(FirstOrderTracker::new(time_constant)?),
    };
    let limits = s.saturation.unwrap_or_else(SaturationLimits::unlimited);

    let mut report = VerificationReport {
        scenario: s.name().to_string(),
        fidelity: s.fidelity,
        uncertainty: s.uncertainty.label(),
        dt,
        duration: s.duration,
        steps_completed: 0,
        completed: false,
        abort_reason: None,
        bound_violations: 0,
        max_position_error: [0.0; 3],
        max_attitude_error: [0.0; 3],
        settle_time: options.settle_time,
        max_position_error_settled: [0.0; 3],
        max_attitude_error_settled: [0.0; 3],
        terminal_position_error: [0.0; 3],
        terminal_attitude_error: [0.0; 3],
        position_energy_increases: [0; 3],
        attitude_energy_increases: [0; 3],
        saturated_steps: 0,
        saturation_duty: 0.0,
        first_saturation_time: None,
        last_saturation_time: None,
        peak_thrust_time: 0.0,
        peak_moment_time: 0.0,
        max_abs_h_bar: [0.0; 3],
        initial_position_energy: [0.0; 3],
        initial_attitude_energy: [0.0; 3],
        envelopes,
        position_confinement: zero_axes(AXIS_NAMES, |axis| AxisConfinement {
            axis,
            interval: (0.0, 0.0),
            limit: 0.0,
            within_limit: false,
            assumptions_hold: false,
            violations: 0,
        }),
        attitude_confinement: zero_axes(ANGLE_NAMES, |axis| AxisConfinement {
            axis,
            interval: (0.0, 0.0),
            limit: 0.0,
            within_limit: false,
            assumptions_hold: false,
            violations: 0,
        }),
        identity: None,
        assumption_warnings,
    };

    let mut telemetry = Vec::new();
    let mut identity = (s.fidelity == Fidelity::TheoryExact).then(|| IdentityTracker::new(steps, options.identity_samples));

    // Discrete differentiation of the commanded roll/pitch stream (cascade only).
    let mut previous_command: Option<Vector3<f64>> = None;
    let mut command_rate = Vector3::zeros();
    let mut omega_r = 0.0;
    let mut previous_energy: Option<([f64; 3], [f64; 3])> = None;
    let mut previously_saturated = false;
    let (mut peak_thrust, mut peak_moment) = (-1.0, -1.0);

    let outcome: std::result::Result<(), (Error, f64)> = (|| {
        for k in 0..=steps {
            let t = k as f64 * dt;
            let state = rigid(&y);
            let hb = h_bar(&y);
            let outer = engine.outer(t, &state).map_err(|e| (e, t))?;

            let reference = match s.fidelity {
                Fidelity::Cascade => {
                    let command = outer.attitude;
                    let (rate, accel) = match previous_command {
                        Some(prev) => {
                            let rate = (command - prev) / dt;
                            let accel = if k >= 2 { (rate - command_rate) / dt } else { Vector3::zeros() };
                            (rate, accel)
                        }
                        None => (Vector3::zeros(), Vector3::zeros()),
                    };
                    previous_command = Some(command);
                    command_rate = rate;
                    let mut r = AttitudeReference { angle: command, rate, accel };
                    r.rate.z = outer.sample.attitude_rate.z;
                    r.accel.z = outer.sample.attitude_accel.z;
                    r
                }
                Fidelity::TheoryExact => engine.feedforward(t).map_err(|e| (e, t))?,
            };

            let h_hat = estimator.estimate();
            let position_loops = engine.position_loops(&outer).map_err(|e| (e, t))?;
            let attitude_loops = engine.attitude_loops(&state, &reference, &hb).map_err(|e| (e, t))?;
            let moments = engine.moments(&state, &reference, &h_hat, &hb, omega_r).map_err(|e| (e, t))?;
            let demand = ControlInputs::new(outer.thrust, moments);
            let (applied, flags) = saturate(&demand, &limits);
            let rotors = vehicle::allocate_rotors(&applied, &s.params).map_err(|e| (e, t))?;

            let e_pos: [f64; 3] = std::array::from_fn(|i| position_loops[i].energy);
            let e_att: [f64; 3] = std::array::from_fn(|i| attitude_loops[i].energy);
            if k == 0 {
                report.initial_position_energy = e_pos;
                report.initial_attitude_energy = e_att;
                confinement_setup(s, &mut report);
            }
            if let Some((prev_pos, prev_att)) = previous_energy {
                if !previously_saturated {
                    for i in 0..3 {
                        if e_pos[i] > prev_pos[i] + MONOTONICITY_TOL {
                            report.position_energy_increases[i] += 1;
                        }
                        if e_att[i] > prev_att[i] + MONOTONICITY_TOL {
                            report.attitude_energy_increases[i] += 1;
                        }
                    }
                }
            }
            previous_energy = Some((e_pos, e_att));
            previously_saturated = flags != 0;

            if let Some(tracker) = identity.as_mut() {
                let mut energy = [0.0; 6];
                let mut rate = [0.0; 6];
                for i in 0..3 {
                    energy[i] = e_pos[i];
                    energy[3 + i] = e_att[i];
                    rate[i] = position_loops[i].energy_rate(s.position_gains.stabilizer[i], s.position_gains.damping[i]);
                    rate[3 + i] = attitude_loops[i].energy_rate(s.attitude_gains.stabilizer[i], s.attitude_gains.damping[i]);
                }
                tracker.push(k, dt, energy, rate);
            }

            let upsilon = state.attitude - reference.angle;
            for i in 0..3 {
                report.max_position_error[i] = report.max_position_error[i].max(outer.gamma[i].abs());
                report.max_attitude_error[i] = report.max_attitude_error[i].max(upsilon[i].abs());
                if t > options.settle_time {
                    report.max_position_error_settled[i] = report.max_position_error_settled[i].max(outer.gamma[i].abs());
                    report.max_attitude_error_settled[i] = report.max_attitude_error_settled[i].max(upsilon[i].abs());
                }
                report.max_abs_h_bar[i] = report.max_abs_h_bar[i].max(hb[i].abs());
                if !report.position_confinement[i].contains(state.position[i]) {
                    report.position_confinement[i].violations += 1;
                }
                if !report.attitude_confinement[i].contains(state.attitude[i]) {
                    report.attitude_confinement[i].violations += 1;
                }
            }
            report.terminal_position_error = outer.gamma.into();
            report.terminal_attitude_error = upsilon.into();
            let thrust_dev = (demand.thrust - s.params.hover_thrust()).abs();
            if thrust_dev > peak_thrust {
                peak_thrust = thrust_dev;
                report.peak_thrust_time = t;
            }
            if demand.moments.amax() > peak_moment {
                peak_moment = demand.moments.amax();
                report.peak_moment_time = t;
            }
            if flags != 0 {
                report.saturated_steps += 1;
                report.first_saturation_time.get_or_insert(t);
                report.last_saturation_time = Some(t);
            }

            if options.record_every > 0 && k % options.record_every == 0 {
                telemetry.push(TelemetryRow {
                    t,
                    state,
                    desired_position: outer.sample.position,
                    desired_attitude: reference.angle,
                    position_error: outer.gamma,
                    attitude_error: upsilon,
                    virtual_control: outer.delta,
                    inputs: applied,
                    rotors,
                    position_energy: e_pos.into(),
                    attitude_energy: e_att.into(),
                    h_bar: hb,
                    saturation_flags: flags,
                });
            }
            report.steps_completed = k;
            if k == steps {
                break;
            }

            let omega_now = rotors.relative;
            y = match s.fidelity {
                Fidelity::Cascade => {
                    let eng = &engine;
                    rk4_step(
                        |tau, y| {
                            let st = rigid(y);
                            let held = reference.advanced(tau - t);
                            let accel = vehicle::translational_accel(&st, applied.thrust, &s.params)?;
                            let angular = eng.attitude_truth(&st, &applied.moments, omega_now)?;
                            let adapt = eng.adaptation(&st, &held)?;
                            Ok(derivative(&st, &accel, &angular, &adapt))
                        },
                        t,
                        &y,
                        dt,
                    )
                    .map_err(|e| (e, t))?
                }
                Fidelity::TheoryExact => {
                    let eng = &mut engine;
                    rk4_step(
                        |tau, y| {
                            let st = rigid(y);
                            let hb = h_bar(y);
                            let outer = eng.outer(tau, &st)?;
                            let reference = eng.feedforward(tau)?;
                            let moments = eng.moments(&st, &reference, &h_hat, &hb, omega_now)?;
                            let accel = outer.delta - s.params.drag.component_mul(&st.velocity) / s.params.mass;
                            let angular = eng.attitude_truth(&st, &moments, omega_now)?;
                            let adapt = eng.adaptation(&st, &reference)?;
                            Ok(derivative(&st, &accel, &angular, &adapt))
                        },
                        t,
                        &y,
                        dt,
                    )
                    .map_err(|e| (e, t))?
                }
            };
            omega_r = omega_now;

            let next = rigid(&y);
            let measured = (next.attitude_rate - state.attitude_rate) / dt;
            let model = vehicle::attitude_drift(&state.attitude_rate, omega_now, &s.params)
                + vehicle::attitude_input_gain(&s.params).component_mul(&applied.moments)
                + hb.component_mul(&state.attitude_rate.map(attitude::regressor));
            estimator.update(&(measured - model), dt);
        }
        Ok(())
    })();

    match outcome {
        Ok(()) => report.completed = true,
        Err((e, t)) => {
            if matches!(e, Error::BoundViolation { .. }) {
                report.bound_violations += 1;
            }
            report.abort_reason = Some(format!("{e} at t = {t:.6} s"));
        }
    }
    report.saturation_duty = report.saturated_steps as f64 / (report.steps_completed + 1) as f64;
    report.identity = identity.map(|tracker| tracker.report());
    Ok(RunOutput { telemetry, report })
}

fn derivative(state: &RigidState, accel: &Vector3<f64>, angular: &Vector3<f64>, adapt: &Vector3<f64>) -> FullState {
    let mut d = FullState::zeros();
    d.fixed_rows_mut::<3>(0).copy_from(&state.velocity);
    d.fixed_rows_mut::<3>(3).copy_from(accel);
    d.fixed_rows_mut::<3>(6).copy_from(&state.attitude_rate);
    d.fixed_rows_mut::<3>(9).copy_from(angular);
    d.fixed_rows_mut::<3>(12).copy_from(adapt);
    d
}

fn confinement_setup(s: &Scenario, report: &mut VerificationReport) {
    let c = &s.constraints;
    let env = report.envelopes;
    for i in 0..3 {
        let set = Confinement::new(
            &c.position_bounds[i],
            report.initial_position_energy[i].max(0.0),
            env.position[i].lower,
            env.position[i].upper,
        );
        let slot = &mut report.position_confinement[i];
        slot.interval = set.interval;
        slot.limit = c.position_limits[i];
        slot.within_limit = set.within_limit(slot.limit);
        slot.assumptions_hold = c.position_bounds[i].lower + env.position[i].lower <= slot.limit
            && c.position_bounds[i].upper + env.position[i].upper <= slot.limit;

        let set = Confinement::new(
            &c.attitude_bounds[i],
            report.initial_attitude_energy[i].max(0.0),
            env.attitude[i].lower,
            env.attitude[i].upper,
        );
        let slot = &mut report.attitude_confinement[i];
        slot.interval = set.interval;
        slot.limit = c.attitude_limits[i];
        slot.within_limit = set.within_limit(slot.limit);
        slot.assumptions_hold = c.attitude_bounds[i].lower + env.attitude[i].lower <= slot.limit
            && c.attitude_bounds[i].upper + env.attitude[i].upper <= slot.limit;
    }
}

impl AxisConfinement {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.interval.0 && value <= self.interval.1
    }
}
