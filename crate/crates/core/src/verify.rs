//! Property checks over all modules, shared by the `verify` command and the
//! acceptance test target.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attitude::{self, AttitudeBounds};
use crate::position::{self, AxisBounds};
use crate::sim::integrator::convergence_probe;
use crate::sim::run::{run_scenario, RunOptions, VerificationReport};
use crate::sim::scenario::{InitialCondition, Scenario, Uncertainty};
use crate::sim::trajectory::Trajectory;
use crate::vehicle::{self, ControlInputs, RigidState, VehicleParams, EULER_SINGULARITY_MARGIN};
use crate::Error;

/// Size of a verification pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    /// Random cases for the algebraic checks.
    pub samples: usize,
    /// Duration of the closed-loop scenario runs (s).
    pub duration: f64,
    /// Duration of the fine-step Lyapunov identity runs (s).
    pub identity_duration: f64,
    pub seed: u64,
}

impl Profile {
    pub fn full() -> Self {
        Self {
            samples: 10_000,
            duration: 60.0,
            identity_duration: 10.0,
            seed: 7,
        }
    }

    pub fn fast() -> Self {
        Self {
            samples: 1_000,
            duration: 60.0,
            identity_duration: 2.0,
            seed: 7,
        }
    }
}

/// Outcome of one property.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// Tolerances of the tracking criterion.
pub const SETTLE_TIME: f64 = 20.0;
pub const SETTLED_ERROR: f64 = 1e-2;
pub const TERMINAL_ERROR: f64 = 1e-3;
/// Saturation may only occur before this time.
pub const TRANSIENT_END: f64 = 2.0;
pub const RUNTIME_BUDGET_S: f64 = 5.0;
pub const IDENTITY_DT: f64 = 1e-4;
pub const IDENTITY_MIN_SAMPLES: usize = 10;

pub fn reference_scenarios() -> [Scenario; 3] {
    [Scenario::orbital(), Scenario::helix(), Scenario::bow()]
}

fn rng(profile: &Profile, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(profile.seed.wrapping_mul(1000).wrapping_add(stream))
}

fn admissible_angles(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let lim = FRAC_PI_2 - 1e-3;
    Vector3::new(rng.random_range(-lim..lim), rng.random_range(-lim..lim), rng.random_range(-3.2..3.2))
}

fn run(scenario: &Scenario, options: &RunOptions) -> (VerificationReport, f64) {
    let start = Instant::now();
    let report = match run_scenario(scenario, options) {
        Ok(out) => out.report,
        Err(e) => panic!("scenario {} rejected: {e}", scenario.name()),
    };
    (report, start.elapsed().as_secs_f64())
}

fn quiet() -> RunOptions {
    RunOptions {
        record_every: 0,
        settle_time: SETTLE_TIME,
        identity_samples: 50,
    }
}

fn fmt3(v: &[f64; 3]) -> String {
    format!("[{:.2e}, {:.2e}, {:.2e}]", v[0], v[1], v[2])
}

/// Zero bound violations for the three scenarios with their default gains and bounds.
pub fn bound_invariance(profile: &Profile) -> Check {
    let mut passed = true;
    let mut parts = Vec::new();
    for mut s in reference_scenarios() {
        s.duration = profile.duration;
        let (r, secs) = run(&s, &quiet());
        let h_bound = 10.0 * s.uncertainty.h0().amax();
        let adaptation_bounded = r.max_abs_h_bar.iter().all(|h| *h <= h_bound);
        let ok = r.passed() && secs < RUNTIME_BUDGET_S && adaptation_bounded;
        passed &= ok;
        parts.push(match &r.abort_reason {
            Some(reason) => format!("{}: aborted ({reason})", s.name()),
            None => format!(
                "{}: {} violations, max |gamma| {}, max |upsilon| {}, max |h_bar| {:.3}, {:.2} s",
                s.name(),
                r.bound_violations,
                fmt3(&r.max_position_error),
                fmt3(&r.max_attitude_error),
                r.max_abs_h_bar.iter().cloned().fold(0.0, f64::max),
                secs
            ),
        });
    }
    Check::new("bound invariance", passed, parts.join("; "))
}

/// Errors below the settled tolerance after the settle time and below the terminal tolerance at the end.
pub fn asymptotic_tracking(profile: &Profile) -> Check {
    let mut passed = true;
    let mut parts = Vec::new();
    for mut s in reference_scenarios() {
        s.duration = profile.duration;
        let (r, _) = run(&s, &quiet());
        let below = |v: &[f64; 3], tol: f64| v.iter().all(|e| e.abs() < tol);
        let ok = r.passed()
            && below(&r.max_position_error_settled, SETTLED_ERROR)
            && below(&r.max_attitude_error_settled, SETTLED_ERROR)
            && below(&r.terminal_position_error, TERMINAL_ERROR)
            && below(&r.terminal_attitude_error, TERMINAL_ERROR);
        passed &= ok;
        parts.push(format!(
            "{}: settled pos {} att {}, terminal pos {} att {}",
            s.name(),
            fmt3(&r.max_position_error_settled),
            fmt3(&r.max_attitude_error_settled),
            fmt3(&r.terminal_position_error),
            fmt3(&r.terminal_attitude_error)
        ));
    }
    Check::new("asymptotic tracking", passed, parts.join("; "))
}

/// The idealized closed loop with matched uncertainty, started at half of each upper bound.
pub fn theory_scenario(base: Scenario) -> Scenario {
    let mut s = base.into_theory_exact();
    s.initial = InitialCondition::upper_fraction(&s.constraints, 0.5);
    s
}

/// Central-difference Lyapunov rates against the closed-form decay rates.
pub fn lyapunov_identity(profile: &Profile) -> Check {
    let mut passed = true;
    let mut parts = Vec::new();
    for base in reference_scenarios() {
        let mut s = theory_scenario(base);
        s.dt = IDENTITY_DT;
        s.duration = profile.identity_duration;
        let (r, _) = run(&s, &quiet());
        match (&r.identity, r.completed) {
            (Some(id), true) => {
                let ok = id.passed(IDENTITY_MIN_SAMPLES);
                passed &= ok;
                let worst = id.position.iter().chain(id.attitude.iter()).map(|a| a.worst_ratio).fold(0.0, f64::max);
                let samples = id.position.iter().chain(id.attitude.iter()).map(|a| a.samples).min().unwrap_or(0);
                let failures: usize = id.position.iter().chain(id.attitude.iter()).map(|a| a.failures).sum();
                parts.push(format!(
                    "{}: {samples} instants/axis, {failures} failures, worst error/tolerance {worst:.3e}",
                    s.name()
                ));
            }
            _ => {
                passed = false;
                parts.push(format!("{}: run did not complete ({:?})", s.name(), r.abort_reason));
            }
        }
    }
    Check::new("lyapunov rate identity", passed, parts.join("; "))
}

/// Samples inside the confinement sets; the sets inside the limits wherever the
/// bounds are implied by the limits and the reference envelope.
pub fn confinement(profile: &Profile) -> Check {
    let mut passed = true;
    let mut parts = Vec::new();
    for base in reference_scenarios() {
        let mut s = theory_scenario(base);
        s.duration = profile.duration;
        let (r, _) = run(&s, &quiet());
        let axes: Vec<_> = r.position_confinement.iter().chain(r.attitude_confinement.iter()).collect();
        let outside: usize = axes.iter().map(|a| a.violations).sum();
        let not_included: Vec<_> = axes.iter().filter(|a| a.assumptions_hold && !a.within_limit).map(|a| a.axis).collect();
        let excluded: Vec<_> = axes.iter().filter(|a| !a.assumptions_hold).map(|a| a.axis).collect();
        let ok = r.completed && outside == 0 && not_included.is_empty();
        passed &= ok;
        parts.push(format!(
            "{}: {outside} samples outside, inclusion fails on {:?}, bounds not implied by limits on {:?}",
            s.name(),
            not_included,
            excluded
        ));
    }
    Check::new("confinement sets", passed, parts.join("; "))
}

/// Thrust/roll/pitch extraction followed by the forward map reproduces the virtual control.
pub fn thrust_round_trip(profile: &Profile) -> Check {
    let params = VehicleParams::pelican();
    let mut rng = rng(profile, 5);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < profile.samples {
        let delta = Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-9.0..20.0));
        let yaw = rng.random_range(-3.1..3.1);
        let thrust = position::extract_thrust(&delta, &params);
        let Ok((roll, pitch)) = position::desired_attitude(&delta, yaw, thrust, &params) else {
            continue;
        };
        let back = position::realized_virtual_control(thrust, &Vector3::new(roll, pitch, yaw), &params);
        let scale = delta.norm().max(params.gravity);
        worst = worst.max((back - delta).amax() / scale);
        cases += 1;
    }
    Check::new("thrust and attitude extraction round trip", worst <= 1e-9, format!("{cases} cases, worst relative error {worst:.2e}"))
}

/// Allocation followed by mixing is the identity on feasible demands; infeasible demands are rejected.
pub fn allocation_bijectivity(profile: &Profile) -> Check {
    let params = VehicleParams::pelican();
    let mut rng = rng(profile, 6);
    let mut worst: f64 = 0.0;
    for _ in 0..profile.samples {
        let squared: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..250_000.0));
        let demand = vehicle::mix_forward(&squared.map(f64::sqrt), &params).expect("non-negative speeds");
        let rotors = vehicle::allocate_rotors(&demand, &params).expect("feasible by construction");
        let back = vehicle::mix_forward(&rotors.speeds, &params).expect("non-negative speeds");
        let rel = |a: f64, b: f64, s: f64| (a - b).abs() / s;
        let thrust_scale = demand.thrust.abs().max(1e-12);
        let moment_scale = demand.moments.amax().max(demand.thrust * params.arm_length * 1e-3);
        worst = worst
            .max(rel(back.thrust, demand.thrust, thrust_scale))
            .max((back.moments - demand.moments).amax() / moment_scale);
    }
    let infeasible = [
        ControlInputs::new(0.0, Vector3::new(1.0, 0.0, 0.0)),
        ControlInputs::new(1.0, Vector3::new(0.0, 5.0, 0.0)),
        ControlInputs::new(-1.0, Vector3::zeros()),
    ];
    let rejected = infeasible
        .iter()
        .all(|u| matches!(vehicle::allocate_rotors(u, &params), Err(Error::InfeasibleAllocation { .. })));
    Check::new(
        "allocation bijectivity",
        worst <= 1e-9 && rejected,
        format!("{} demands, worst relative error {worst:.2e}, infeasible demands rejected: {rejected}", profile.samples),
    )
}

/// Orthonormal rotation matrices and the Euler-rate singularity threshold.
pub fn kinematics(profile: &Profile) -> Check {
    let mut rng = rng(profile, 7);
    let n = profile.samples / 10;
    let mut worst_orth: f64 = 0.0;
    let mut worst_det: f64 = 0.0;
    for _ in 0..n {
        let r = vehicle::rotation_matrix(&admissible_angles(&mut rng)).expect("admissible");
        worst_orth = worst_orth.max((r.transpose() * r - Matrix3::identity()).amax());
        worst_det = worst_det.max((r.determinant() - 1.0).abs());
    }
    let threshold = FRAC_PI_2 - EULER_SINGULARITY_MARGIN;
    let singular = [threshold, threshold + 1e-7, -threshold, FRAC_PI_2 - 1e-9]
        .iter()
        .all(|&pitch| matches!(vehicle::euler_rate_transform(&Vector3::new(0.0, pitch, 0.0), &Vector3::x()), Err(Error::EulerSingularity { .. })));
    let regular = vehicle::euler_rate_transform(&Vector3::new(0.0, threshold - 1e-7, 0.0), &Vector3::x()).is_ok();
    Check::new(
        "kinematics",
        worst_orth < 1e-12 && worst_det < 1e-12 && singular && regular,
        format!("{n} attitudes, max |R^T R - I| {worst_orth:.2e}, max |det R - 1| {worst_det:.2e}, singularity threshold honoured: {}", singular && regular),
    )
}

/// Bound invariance with the full rigid-body inertia perturbation and the default estimator.
pub fn physical_robustness(profile: &Profile) -> Check {
    let mut passed = true;
    let mut parts = Vec::new();
    for mut s in reference_scenarios() {
        s.duration = profile.duration;
        s.uncertainty = Uncertainty::Physical;
        let (r, _) = run(&s, &quiet());
        passed &= r.passed();
        parts.push(match &r.abort_reason {
            Some(reason) => format!("{}: aborted ({reason})", s.name()),
            None => format!(
                "{}: {} violations, max |gamma| {}, max |upsilon| {}",
                s.name(),
                r.bound_violations,
                fmt3(&r.max_position_error),
                fmt3(&r.max_attitude_error)
            ),
        });
    }
    Check::new("inertia uncertainty robustness", passed, parts.join("; "))
}

pub fn integrator_order(_profile: &Profile) -> Check {
    match convergence_probe(0.1) {
        Ok((coarse, fine)) => {
            let ratio = coarse / fine;
            Check::new("rk4 order", ratio >= 15.0, format!("error {coarse:.3e} -> {fine:.3e} on halving dt, ratio {ratio:.2}"))
        }
        Err(e) => Check::new("rk4 order", false, e.to_string()),
    }
}

/// Saturation confined to the initial transient of the orbital run.
pub fn saturation_transient(profile: &Profile) -> Check {
    let mut s = Scenario::orbital();
    s.duration = profile.duration;
    let (r, _) = run(&s, &quiet());
    let late = r.last_saturation_time.is_some_and(|t| t >= TRANSIENT_END);
    let ok = r.completed && !late && r.peak_thrust_time < TRANSIENT_END && r.peak_moment_time < TRANSIENT_END;
    Check::new(
        "saturation only in transient",
        ok,
        format!(
            "{} saturated steps (duty {:.2e}), last at {:?} s; peak thrust demand at {:.3} s, peak moment demand at {:.3} s",
            r.saturated_steps, r.saturation_duty, r.last_saturation_time, r.peak_thrust_time, r.peak_moment_time
        ),
    )
}

/// Analytic trajectory derivatives against five-point central differences.
pub fn trajectory_derivatives(profile: &Profile) -> Check {
    let mut rng = rng(profile, 11);
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    for traj in [Trajectory::Orbital, Trajectory::Helix, Trajectory::Bow] {
        for _ in 0..profile.samples / 10 {
            let t = rng.random_range(0.0..60.0);
            let p = |tau: f64| traj.sample(tau);
            let stencil = |f: &dyn Fn(f64) -> Vector3<f64>| (f(t - 2.0 * h) - f(t + 2.0 * h) + (f(t + h) - f(t - h)) * 8.0) / (12.0 * h);
            let s = p(t);
            worst = worst
                .max((stencil(&|tau| p(tau).position) - s.velocity).amax())
                .max((stencil(&|tau| p(tau).velocity) - s.acceleration).amax());
        }
    }
    Check::new("trajectory derivatives", worst < 1e-6, format!("worst absolute error {worst:.2e}"))
}

/// Algebraic identities of the barrier terms.
pub fn barrier_identities(profile: &Profile) -> Check {
    let mut rng = rng(profile, 12);
    let b = AttitudeBounds::new(0.08, 0.23).expect("valid");
    let pb = AxisBounds::new(2.2, 0.2).expect("valid");
    let mut quotient: f64 = 0.0;
    let mut bracket: f64 = 0.0;
    let mut rate: f64 = 0.0;
    for _ in 0..profile.samples {
        let u = rng.random_range(-0.0799..0.2299);
        let ud = rng.random_range(-2.0..2.0);
        let s = attitude::switch_s(u);
        let (lo, up) = (b.lower * b.lower - u * u, b.upper * b.upper - u * u);
        let q = -(lo * up) / ((1.0 - s) * up + s * lo) * 100.0 * u.powi(3);
        let sigma = attitude::stabilizing_sigma(u, &b, 100.0).expect("inside");
        quotient = quotient.max((sigma - q).abs());
        let l = attitude::lambda(u, ud, &b, 100.0).expect("inside");
        let br = ud + 100.0 * u.powi(3) * (s * (b.upper.powi(2) - b.lower.powi(2)) + lo);
        bracket = bracket.max((l - br).abs());

        let g: f64 = rng.random_range(-2.0..0.15);
        let gd: f64 = rng.random_range(-1.0..1.0);
        let eps = 1e-6;
        if g.abs() > 1e-3 {
            let fd = (position::stabilizing_beta(g + eps * gd, &pb, 100.0).expect("inside")
                - position::stabilizing_beta(g - eps * gd, &pb, 100.0).expect("inside"))
                / (2.0 * eps);
            let an = position::beta_rate(g, gd, &pb, 100.0).expect("inside");
            rate = rate.max((fd - an).abs() / an.abs().max(1.0));
        }
    }
    Check::new(
        "barrier identities",
        quotient <= 1e-12 && bracket <= 1e-12 && rate <= 1e-6,
        format!("sigma quotient form {quotient:.2e}, adaptation bracket {bracket:.2e}, beta rate vs finite difference {rate:.2e}"),
    )
}

/// Hover-thrust inversion and the bound on the lumped uncertainty.
pub fn model_properties(profile: &Profile) -> Check {
    let params = VehicleParams::pelican();
    let mut rng = rng(profile, 13);
    let mut hover: f64 = 0.0;
    let mut bound_ok = true;
    let mut slope: f64 = 0.0;
    let j0_inv = 1.0 / params.inertia.min();
    for _ in 0..profile.samples / 10 {
        let angles = Vector3::new(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(-3.0..3.0));
        let state = RigidState {
            attitude: angles,
            ..Default::default()
        };
        let thrust = params.hover_thrust() / (angles.x.cos() * angles.y.cos());
        hover = hover.max(vehicle::translational_accel(&state, thrust, &params).expect("admissible").z.abs());

        let w = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let wd = Vector3::from_fn(|_, _| rng.random_range(-20.0..20.0));
        let h = vehicle::lumped_uncertainty(&w, &wd, &params);
        bound_ok &= h.norm() <= j0_inv * (w.norm_squared() + wd.norm()) * params.inertia_bound * (1.0 + 1e-12);

        let state = RigidState {
            attitude_rate: w,
            ..Default::default()
        };
        let u = Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
        let du = 1e-4;
        for axis in 0..3 {
            let mut up = u;
            up[axis] += du;
            let a0 = vehicle::attitude_accel(&state, &u, 10.0, &params, &Vector3::zeros()).expect("admissible");
            let a1 = vehicle::attitude_accel(&state, &up, 10.0, &params, &Vector3::zeros()).expect("admissible");
            slope = slope.max(((a1[axis] - a0[axis]) / du * params.inertia[axis] - 1.0).abs());
        }
    }
    Check::new(
        "model properties",
        hover < 1e-9 && bound_ok && slope < 1e-6,
        format!("hover inversion residual {hover:.2e}, uncertainty bound holds: {bound_ok}, input slope error {slope:.2e}"),
    )
}

/// Identical scenarios give bit-identical telemetry.
pub fn determinism(profile: &Profile) -> Check {
    let mut s = Scenario::bow();
    s.duration = profile.duration.min(5.0);
    let a = run_scenario(&s, &RunOptions::default()).map(|o| o.telemetry);
    let b = run_scenario(&s, &RunOptions::default()).map(|o| o.telemetry);
    let same = matches!((&a, &b), (Ok(x), Ok(y)) if x == y);
    Check::new("determinism", same, format!("{} rows compared", a.map(|t| t.len()).unwrap_or(0)))
}

type CheckFn = fn(&Profile) -> Check;

/// Acceptance criteria in order.
pub fn acceptance(profile: &Profile) -> Vec<Check> {
    let criteria: [(&str, CheckFn); 10] = [
        ("1 bound invariance", bound_invariance),
        ("2 asymptotic tracking", asymptotic_tracking),
        ("3 lyapunov rate identity", lyapunov_identity),
        ("4 confinement sets", confinement),
        ("5 thrust extraction round trip", thrust_round_trip),
        ("6 allocation bijectivity", allocation_bijectivity),
        ("7 kinematics", kinematics),
        ("8 inertia uncertainty robustness", physical_robustness),
        ("9 integrator order", integrator_order),
        ("10 saturation in transient", saturation_transient),
    ];
    criteria
        .iter()
        .map(|(name, f)| Check {
            name: (*name).to_string(),
            ..f(profile)
        })
        .collect()
}

/// Every property: the acceptance criteria followed by the supporting invariants.
pub fn full_suite(profile: &Profile) -> Vec<Check> {
    let mut checks = acceptance(profile);
    for f in [trajectory_derivatives, barrier_identities, model_properties, determinism] {
        checks.push(f(profile));
    }
    checks
}
