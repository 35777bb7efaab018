use thiserror::Error;

/// Errors raised by the vehicle model, the control laws and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("roll/pitch outside the model domain (|phi| < pi/2, |theta| < pi/2): phi = {roll}, theta = {pitch}")]
    AttitudeDomain { roll: f64, pitch: f64 },

    #[error("euler-rate transform is singular at pitch = {pitch}")]
    EulerSingularity { pitch: f64 },

    #[error("negative rotor speed {speed} for rotor {index}")]
    NegativeRotorSpeed { index: usize, speed: f64 },

    #[error("demand outside the actuator cone: squared rotor speeds {squared:?}")]
    InfeasibleAllocation { squared: [f64; 4] },

    #[error("error {value} outside the open interval (-{lower}, {upper})")]
    BoundViolation { value: f64, lower: f64, upper: f64 },

    #[error("net thrust {thrust} N is below the extraction threshold")]
    DegenerateThrust { thrust: f64 },

    #[error("lateral demand is infeasible: asin argument {argument}")]
    InfeasibleAttitude { argument: f64 },

    #[error("control gain is zero for this channel")]
    DegeneratePlant,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
