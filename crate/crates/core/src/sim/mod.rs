//! Fixed-step closed-loop simulation of the constrained tracking controller.

pub mod integrator;
pub mod run;
pub mod saturation;
pub mod scenario;
pub mod trajectory;

pub use integrator::rk4_step;
pub use run::{run_scenario, RunOptions, RunOutput, TelemetryRow, VerificationReport};
pub use saturation::{saturate, SaturationLimits};
pub use scenario::{ConstraintSpec, EstimatorKind, Fidelity, InitialCondition, Scenario, Uncertainty};
pub use trajectory::{CustomTrajectory, Harmonic, Trajectory, TrajectorySample};
