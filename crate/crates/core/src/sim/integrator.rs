//! Classical fourth-order Runge-Kutta.

use nalgebra::SVector;

use crate::error::Result;

/// One RK4 step of `y' = f(t, y)` from `(t, y)` over `dt`.
pub fn rk4_step<const N: usize, F>(mut f: F, t: f64, y: &SVector<f64, N>, dt: f64) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let half = 0.5 * dt;
    let k1 = f(t, y)?;
    let k2 = f(t + half, &(y + k1 * half))?;
    let k3 = f(t + half, &(y + k2 * half))?;
    let k4 = f(t + dt, &(y + k3 * dt))?;
    Ok(y + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}

/// Integrate `y' = f(t, y)` from `t0` for `steps` fixed steps.
pub fn integrate<const N: usize, F>(mut f: F, t0: f64, y0: SVector<f64, N>, dt: f64, steps: usize) -> Result<SVector<f64, N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> Result<SVector<f64, N>>,
{
    let mut y = y0;
    for k in 0..steps {
        y = rk4_step(&mut f, t0 + k as f64 * dt, &y, dt)?;
    }
    Ok(y)
}

/// Smooth nonlinear probe `x' = -x + sin(t) x^2 / 4`, `x(0) = 1`, on `[0, 2]`.
/// Returns the terminal errors against a 16x finer reference for steps `dt` and `dt / 2`.
pub fn convergence_probe(dt: f64) -> Result<(f64, f64)> {
    let f = |t: f64, y: &SVector<f64, 1>| Ok(SVector::<f64, 1>::new(-y[0] + 0.25 * t.sin() * y[0] * y[0]));
    let horizon = 2.0;
    let run = |h: f64| integrate(f, 0.0, SVector::<f64, 1>::new(1.0), h, (horizon / h).round() as usize).map(|y| y[0]);
    let reference = run(dt / 16.0)?;
    Ok(((run(dt)? - reference).abs(), (run(dt / 2.0)? - reference).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_step() {
        let y = rk4_step(|_, y: &SVector<f64, 1>| Ok(-y), 0.0, &SVector::<f64, 1>::new(1.0), 0.1).unwrap();
        // 1 - h + h^2/2 - h^3/6 + h^4/24 at h = 0.1.
        assert!((y[0] - 0.904_837_5).abs() < 1e-12);
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn free_fall_is_exact() {
        let g = 9.81;
        let f = |_: f64, y: &SVector<f64, 2>| Ok(SVector::<f64, 2>::new(y[1], -g));
        let y = integrate(f, 0.0, SVector::<f64, 2>::new(5.0, 0.0), 0.01, 100).unwrap();
        assert!((y[0] - (5.0 - 0.5 * g)).abs() < 1e-8);
    }

    #[test]
    fn fourth_order_convergence() {
        let (coarse, fine) = convergence_probe(0.1).unwrap();
        assert!(coarse / fine >= 15.0, "ratio {}", coarse / fine);
    }
}
