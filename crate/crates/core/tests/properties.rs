use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use quadbarrier::attitude::{self, AttitudeBounds, AttitudeDemand, AttitudeLoopState};
use quadbarrier::barrier::{self, Confinement, ErrorBounds};
use quadbarrier::position::{self, AxisBounds, AxisDemand, PositionLoopState};
use quadbarrier::sim::{saturate, SaturationLimits, Trajectory};
use quadbarrier::vehicle::{self, ControlInputs, RigidState, VehicleParams};
use quadbarrier::Error;

fn bounds() -> impl Strategy<Value = ErrorBounds> {
    (0.05f64..3.0, 0.05f64..3.0).prop_map(|(l, u)| ErrorBounds::new(l, u).unwrap())
}

/// Bounds with an error strictly inside them.
fn bounded_error() -> impl Strategy<Value = (ErrorBounds, f64)> {
    bounds().prop_flat_map(|b| (Just(b), (-0.999 * b.lower)..(0.999 * b.upper)))
}

fn admissible_attitude() -> impl Strategy<Value = Vector3<f64>> {
    let lim = FRAC_PI_2 - 1e-3;
    (-lim..lim, -lim..lim, -4.0f64..4.0).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

fn barrier_slope(e: f64, b: &ErrorBounds) -> f64 {
    let h = 1e-7 * b.lower.min(b.upper);
    (barrier::barrier_value(e + h, b).unwrap() - barrier::barrier_value(e - h, b).unwrap()) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn rotation_is_orthonormal(angles in admissible_attitude()) {
        let r = vehicle::rotation_matrix(&angles).unwrap();
        prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn allocation_inverts_mixing(w in prop::array::uniform4(0.0f64..600.0)) {
        let p = VehicleParams::pelican();
        let u = vehicle::mix_forward(&w, &p).unwrap();
        let rotors = vehicle::allocate_rotors(&u, &p).unwrap();
        for i in 0..4 {
            prop_assert!((rotors.speeds[i] - w[i]).abs() <= 1e-6 * w.iter().cloned().fold(1.0, f64::max));
        }
        prop_assert!((rotors.relative - (w[0] - w[1] + w[2] - w[3])).abs() < 1e-6 * 600.0);
    }

    #[test]
    fn thrust_extraction_round_trips(
        dx in -15.0f64..15.0, dy in -15.0f64..15.0, dz in -9.0f64..15.0, yaw in -3.1f64..3.1,
    ) {
        let p = VehicleParams::pelican();
        let delta = Vector3::new(dx, dy, dz);
        let thrust = position::extract_thrust(&delta, &p);
        prop_assert!(thrust > 0.0);
        let (roll, pitch) = position::desired_attitude(&delta, yaw, thrust, &p).unwrap();
        let back = position::realized_virtual_control(thrust, &Vector3::new(roll, pitch, yaw), &p);
        prop_assert!((back - delta).amax() <= 1e-9 * delta.norm().max(p.gravity));
    }

    #[test]
    fn barrier_is_positive_definite((b, e) in bounded_error()) {
        let w = barrier::barrier_value(e, &b).unwrap();
        prop_assert!(w >= 0.0);
        prop_assert_eq!(w == 0.0, e == 0.0);
        prop_assert!(barrier::barrier_gain(e, &b).unwrap() > 0.0);
    }

    #[test]
    fn barrier_rejects_errors_outside(b in bounds(), excess in 0.0f64..1.0) {
        let above = matches!(barrier::barrier_value(b.upper + excess, &b), Err(Error::BoundViolation { .. }));
        let below = matches!(barrier::barrier_value(-b.lower - excess, &b), Err(Error::BoundViolation { .. }));
        prop_assert!(above && below);
    }

    #[test]
    fn stabilizer_opposes_error((b, e) in bounded_error(), k in 0.1f64..500.0) {
        let beta = position::stabilizing_beta(e, &b, k).unwrap();
        prop_assert!(beta * e <= 0.0);
    }

    #[test]
    fn stabilizer_rate_matches_finite_difference((b, e) in bounded_error(), ed in -3.0f64..3.0, k in 0.1f64..200.0) {
        prop_assume!(e.abs() > 1e-3);
        let h = 1e-6 * b.lower.min(b.upper);
        prop_assume!(b.contains(e + h) && b.contains(e - h));
        let fd = (barrier::stabilizer(e + h * ed, &b, k).unwrap() - barrier::stabilizer(e - h * ed, &b, k).unwrap()) / (2.0 * h);
        let an = barrier::stabilizer_rate(e, ed, &b, k).unwrap();
        prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3));
    }

    // Along the ideal translational dynamics the augmented Lyapunov function
    // decays at exactly -k gamma^4 - m zeta^2.
    #[test]
    fn position_energy_rate_identity(
        (b, gamma) in bounded_error(), gamma_dot in -2.0f64..2.0, pd_ddot in -2.0f64..2.0, v in -3.0f64..3.0,
        k in 1.0f64..200.0, m in 0.5f64..10.0,
    ) {
        let p = VehicleParams::pelican();
        let drag = p.drag.x / p.mass;
        let demand = AxisDemand { gamma, gamma_dot, velocity: v, reference_accel: pd_ddot };
        let delta = position::virtual_control(&demand, &b, k, m, drag).unwrap();
        let gamma_ddot = delta - drag * v - pd_ddot;
        let st = PositionLoopState::new(gamma, gamma_dot, &b, k).unwrap();
        let beta_dot = position::beta_rate(gamma, gamma_dot, &b, k).unwrap();
        let rate = barrier_slope(gamma, &b) * gamma_dot + st.zeta * (gamma_ddot - beta_dot);
        let expected = st.energy_rate(k, m);
        prop_assert!(expected <= 0.0);
        prop_assert!((rate - expected).abs() <= 1e-5 * expected.abs().max(1e-6), "{} vs {}", rate, expected);
    }

    // Same for the attitude loop with a matched disturbance h0 C and the adaptation law.
    #[test]
    fn attitude_energy_rate_identity(
        (b, upsilon) in bounded_error(), upsilon_dot in -2.0f64..2.0, rate in -3.0f64..3.0,
        ref_accel in -2.0f64..2.0, drift in -5.0f64..5.0, h0 in -0.5f64..0.5, h_bar in -0.5f64..0.5,
        z in 1.0f64..200.0, n in 0.5f64..10.0,
    ) {
        let p = VehicleParams::pelican();
        let gain = 1.0 / p.inertia.x;
        let demand = AttitudeDemand { upsilon, upsilon_dot, rate, reference_accel: ref_accel, drift, input_gain: gain, h_hat: 0.0, h_bar };
        let u = attitude::attitude_moment(&demand, &b, z, n).unwrap();
        let c = attitude::regressor(rate);
        let upsilon_ddot = drift + gain * u + h0 * c - ref_accel;
        let h_error = h0 - h_bar;
        let st = AttitudeLoopState::new(upsilon, upsilon_dot, &b, z, h_error).unwrap();
        let sigma_dot = attitude::sigma_rate(upsilon, upsilon_dot, &b, z).unwrap();
        let h_bar_dot = attitude::adaptation_rate(upsilon, upsilon_dot, rate, &b, z).unwrap();
        let d_rate = barrier_slope(upsilon, &b) * upsilon_dot - h_error * h_bar_dot + st.lambda * (upsilon_ddot - sigma_dot);
        let expected = st.energy_rate(z, n);
        prop_assert!((d_rate - expected).abs() <= 1e-5 * expected.abs().max(1e-4), "{} vs {}", d_rate, expected);
    }

    #[test]
    fn confinement_contains_inner_margin(b in bounds(), v0 in 0.0f64..5.0, lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let c = Confinement::new(&b, v0, lo, hi);
        prop_assert!(c.margin_lower < b.lower && c.margin_upper < b.upper);
        prop_assert!(c.margin_lower >= 0.0 && c.margin_upper >= 0.0);
        prop_assert!(c.contains(0.0));
        prop_assert!(c.contains(-lo) && c.contains(hi));
    }

    #[test]
    fn saturation_respects_limits(thrust in -5.0f64..40.0, m in prop::array::uniform3(-10.0f64..10.0)) {
        let limits = SaturationLimits::default();
        let (out, flags) = saturate(&ControlInputs::new(thrust, Vector3::from(m)), &limits);
        prop_assert!(out.thrust >= 0.0 && out.thrust <= limits.thrust_max);
        prop_assert!(out.moments.amax() <= limits.moment_max);
        let (again, flags2) = saturate(&out, &limits);
        prop_assert_eq!(again, out);
        prop_assert_eq!(flags2, 0);
        prop_assert_eq!(flags == 0, out == ControlInputs::new(thrust, Vector3::from(m)));
    }

    #[test]
    fn hover_thrust_cancels_gravity(roll in -1.3f64..1.3, pitch in -1.3f64..1.3, yaw in -3.0f64..3.0) {
        let p = VehicleParams { drag: Vector3::zeros(), ..VehicleParams::pelican() };
        let s = RigidState { attitude: Vector3::new(roll, pitch, yaw), ..Default::default() };
        let a = vehicle::translational_accel(&s, p.hover_thrust() / (roll.cos() * pitch.cos()), &p).unwrap();
        prop_assert!(a.z.abs() < 1e-9);
    }

    #[test]
    fn lumped_uncertainty_is_bounded(w in prop::array::uniform3(-6.0f64..6.0), wd in prop::array::uniform3(-30.0f64..30.0)) {
        let p = VehicleParams::pelican();
        let (w, wd) = (Vector3::from(w), Vector3::from(wd));
        let h = vehicle::lumped_uncertainty(&w, &wd, &p);
        let bound = p.inertia_bound * (w.norm_squared() + wd.norm()) / p.inertia.min();
        prop_assert!(h.norm() <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn trajectories_match_stencil_derivatives(t in 0.01f64..60.0, which in 0usize..3) {
        let traj = [Trajectory::Orbital, Trajectory::Helix, Trajectory::Bow][which];
        let h = 1e-3;
        let f = |tau: f64| traj.sample(tau);
        let stencil = |g: &dyn Fn(f64) -> Vector3<f64>| (g(t - 2.0 * h) - g(t + 2.0 * h) + (g(t + h) - g(t - h)) * 8.0) / (12.0 * h);
        let s = f(t);
        prop_assert!((stencil(&|tau| f(tau).position) - s.velocity).amax() < 1e-6);
        prop_assert!((stencil(&|tau| f(tau).velocity) - s.acceleration).amax() < 1e-6);
    }
}

#[test]
fn attitude_domain_edges() {
    let edge = FRAC_PI_2 - vehicle::EULER_SINGULARITY_MARGIN;
    assert!(vehicle::euler_rate_transform(&Vector3::new(0.0, edge, 0.0), &Vector3::zeros()).is_err());
    assert!(vehicle::euler_rate_transform(&Vector3::new(0.0, edge - 1e-7, 0.0), &Vector3::zeros()).is_ok());
    assert!(vehicle::rotation_matrix(&Vector3::new(f64::NAN, 0.0, 0.0)).is_err());
}

#[test]
fn position_and_attitude_bounds_are_interchangeable() {
    let a: AxisBounds = ErrorBounds::new(0.3, 0.1).unwrap();
    let b: AttitudeBounds = a;
    for e in [-0.29, -0.1, 0.0, 0.05, 0.099] {
        assert_eq!(position::stabilizing_beta(e, &a, 50.0).unwrap(), attitude::stabilizing_sigma(e, &b, 50.0).unwrap());
    }
}
