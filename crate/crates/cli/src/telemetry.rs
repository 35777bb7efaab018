//! Telemetry CSV and JSON summary.

use std::path::Path;

use quadbarrier::sim::{TelemetryRow, VerificationReport};

use crate::error::{io, CliError};

pub const HEADER: [&str; 38] = [
    "t", "x", "y", "z", "xd", "yd", "zd", "phi", "theta", "psi", "phid", "thetad", "psid", "gx", "gy", "gz", "up",
    "ut_err_phi", "ut_err_theta", "ut_err_psi", "uT", "uphi", "utheta", "upsi", "w1", "w2", "w3", "w4", "E_x", "E_y",
    "E_z", "D_phi", "D_theta", "D_psi", "hbar_phi", "hbar_theta", "hbar_psi", "sat_flags",
];

/// 17 significant digits.
pub fn number(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn row_fields(r: &TelemetryRow) -> Vec<String> {
    let mut values = vec![r.t];
    values.extend(r.state.position.iter());
    values.extend(r.desired_position.iter());
    values.extend(r.state.attitude.iter());
    values.extend(r.desired_attitude.iter());
    values.extend(r.position_error.iter());
    values.push(r.virtual_control.norm());
    values.extend(r.attitude_error.iter());
    values.push(r.inputs.thrust);
    values.extend(r.inputs.moments.iter());
    values.extend(r.rotors.speeds.iter());
    values.extend(r.position_energy.iter());
    values.extend(r.attitude_energy.iter());
    values.extend(r.h_bar.iter());
    let mut fields: Vec<String> = values.into_iter().map(number).collect();
    fields.push(r.saturation_flags.to_string());
    fields
}

pub fn write_csv(path: &Path, rows: &[TelemetryRow]) -> Result<(), CliError> {
    let context = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{context}: {e}")))?;
    w.write_record(HEADER).map_err(|e| CliError::Io(format!("{context}: {e}")))?;
    for r in rows {
        w.write_record(row_fields(r)).map_err(|e| CliError::Io(format!("{context}: {e}")))?;
    }
    w.flush().map_err(io(context))
}

pub fn write_report(path: &Path, report: &VerificationReport) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(format!("serializing report: {e}")))?;
    std::fs::write(path, json + "\n").map_err(io(path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use quadbarrier::sim::{run_scenario, RunOptions, Scenario};

    #[test]
    fn row_matches_header() {
        let mut s = Scenario::orbital();
        s.duration = 0.01;
        let out = run_scenario(&s, &RunOptions::default()).unwrap();
        let fields = row_fields(&out.telemetry[0]);
        assert_eq!(fields.len(), HEADER.len());
        assert_eq!(fields[0], "0.0000000000000000e0");
        assert_eq!(fields[1].parse::<f64>().unwrap(), out.telemetry[0].state.position.x);
    }

    #[test]
    fn seventeen_significant_digits() {
        let s = number(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
    }
}
