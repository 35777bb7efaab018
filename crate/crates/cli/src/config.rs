//! Plain-text `key = value` run configuration with dotted keys.
//!
//! Resolution order: scenario defaults, then the file, then environment
//! variables (`QUADBARRIER_` + key with `.` written as `__`), then explicit
//! overrides from the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use quadbarrier::attitude::{AttitudeGains, FirstOrderTracker};
use quadbarrier::barrier::ErrorBounds;
use quadbarrier::position::PositionGains;
use quadbarrier::sim::{
    CustomTrajectory, EstimatorKind, Fidelity, Harmonic, RunOptions, SaturationLimits, Scenario, Trajectory, Uncertainty,
};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "QUADBARRIER_";
pub const DEFAULT_DECIMATION: usize = 10;

const XYZ: [&str; 3] = ["x", "y", "z"];
const ANGLES: [&str; 3] = ["phi", "theta", "psi"];
const SCENARIOS: [&str; 4] = ["orbital", "helix", "bow", "custom"];
const FIDELITIES: [&str; 2] = ["cascade", "theory-exact"];
const UNCERTAINTIES: [&str; 3] = ["none", "matched", "physical"];
const ESTIMATORS: [&str; 2] = ["zero", "first-order"];
const HARMONIC_FIELDS: [&str; 5] = ["offset", "ramp", "amplitude", "frequency", "phase"];
const CHANNELS: [&str; 4] = ["x", "y", "z", "yaw"];

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug formatting of f64 is the shortest string that parses back exactly.
            Self::Num(v) => write!(f, "{v:?}"),
            Self::Bool(b) => write!(f, "{b}"),
            Self::Text(s) => write!(f, "{s}"),
        }
    }
}

/// A right-hand side as written: one value or a list.
#[derive(Debug, Clone, PartialEq)]
pub enum Raw {
    Scalar(Value),
    List(Vec<Value>),
}

fn parse_scalar(text: &str) -> Value {
    let t = text.trim();
    if t.len() >= 2 && ((t.starts_with('"') && t.ends_with('"')) || (t.starts_with('\'') && t.ends_with('\''))) {
        return Value::Text(t[1..t.len() - 1].to_string());
    }
    match t {
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ => t.parse::<f64>().map(Value::Num).unwrap_or_else(|_| Value::Text(t.to_string())),
    }
}

pub fn parse_raw(text: &str) -> Raw {
    let t = text.trim();
    let inner = t.strip_prefix('[').and_then(|s| s.strip_suffix(']'));
    match inner {
        Some(list) => Raw::List(list.split(',').map(parse_scalar).collect()),
        None if t.contains(',') => Raw::List(t.split(',').map(parse_scalar).collect()),
        None => Raw::Scalar(parse_scalar(t)),
    }
}

/// One assignment and where it came from, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: Raw,
    pub origin: String,
}

/// Parses the file format: one `key = value` per line, `#` starts a comment.
pub fn parse(text: &str, source: &str) -> Result<Vec<Entry>, CliError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let origin = format!("{source}:{}", n + 1);
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!("{origin}: expected `key = value`, found `{line}`")));
        };
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.') {
            return Err(CliError::Config(format!("{origin}: malformed key `{key}`")));
        }
        if value.trim().is_empty() {
            return Err(CliError::Config(format!("{origin}: key `{key}` has no value")));
        }
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(CliError::Config(format!("{origin}: key `{key}` already set at {}", prev.origin)));
        }
        entries.push(Entry {
            key: key.to_string(),
            value: parse_raw(value),
            origin,
        });
    }
    Ok(entries)
}

/// Overrides taken from `QUADBARRIER_*` variables.
pub fn env_entries(vars: impl IntoIterator<Item = (String, String)>) -> Vec<Entry> {
    let mut entries: Vec<Entry> = vars
        .into_iter()
        .filter_map(|(name, value)| {
            let key = name.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase().replace("__", ".");
            Some(Entry {
                key,
                value: parse_raw(&value),
                origin: format!("environment {name}"),
            })
        })
        .collect();
    entries.sort_by(|a, b| a.key.cmp(&b.key));
    entries
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub options: RunOptions,
    pub plots: bool,
    pub out_dir: PathBuf,
    values: BTreeMap<String, Value>,
}

type Map = BTreeMap<String, Value>;

fn put(map: &mut Map, key: &str, value: Value) {
    map.insert(key.to_string(), value);
}

fn put_vec(map: &mut Map, prefix: &str, names: [&str; 3], v: &Vector3<f64>) {
    for (i, n) in names.iter().enumerate() {
        put(map, &format!("{prefix}.{n}"), Value::Num(v[i]));
    }
}

fn text(s: &str) -> Value {
    Value::Text(s.to_string())
}

/// Every key with its default for the given scenario name.
fn defaults(name: &str) -> Map {
    let s = Scenario::by_name(name).unwrap_or_else(Scenario::orbital);
    let mut m = Map::new();
    put(&mut m, "scenario", text(name));
    put(&mut m, "duration", Value::Num(s.duration));
    put(&mut m, "dt", Value::Num(s.dt));
    put(&mut m, "fidelity", text("cascade"));

    let p = &s.params;
    put(&mut m, "vehicle.m", Value::Num(p.mass));
    put_vec(&mut m, "vehicle.j", XYZ, &p.inertia);
    put_vec(&mut m, "vehicle.j_delta", XYZ, &p.inertia_delta);
    put(&mut m, "vehicle.j_delta_bound", Value::Num(p.inertia_bound));
    put(&mut m, "vehicle.l", Value::Num(p.arm_length));
    put(&mut m, "vehicle.ct", Value::Num(p.thrust_coeff));
    put(&mut m, "vehicle.cq", Value::Num(p.moment_coeff));
    put(&mut m, "vehicle.jr", Value::Num(p.rotor_inertia));
    put_vec(&mut m, "vehicle.drag", XYZ, &p.drag);
    put(&mut m, "vehicle.g", Value::Num(p.gravity));

    put_vec(&mut m, "gains.position.k", XYZ, &s.position_gains.stabilizer);
    put_vec(&mut m, "gains.position.m", XYZ, &s.position_gains.damping);
    put_vec(&mut m, "gains.attitude.z", ANGLES, &s.attitude_gains.stabilizer);
    put_vec(&mut m, "gains.attitude.n", ANGLES, &s.attitude_gains.damping);

    let c = &s.constraints;
    put_vec(&mut m, "bounds.position.lower", XYZ, &Vector3::from_fn(|i, _| c.position_bounds[i].lower));
    put_vec(&mut m, "bounds.position.upper", XYZ, &Vector3::from_fn(|i, _| c.position_bounds[i].upper));
    put_vec(&mut m, "bounds.attitude.lower", ANGLES, &Vector3::from_fn(|i, _| c.attitude_bounds[i].lower));
    put_vec(&mut m, "bounds.attitude.upper", ANGLES, &Vector3::from_fn(|i, _| c.attitude_bounds[i].upper));
    put_vec(&mut m, "limits.position", XYZ, &c.position_limits);
    put_vec(&mut m, "limits.attitude", ANGLES, &c.attitude_limits);

    put_vec(&mut m, "initial.position_error", XYZ, &s.initial.position_error);
    put_vec(&mut m, "initial.velocity", XYZ, &s.initial.velocity);
    put_vec(&mut m, "initial.attitude_error", ANGLES, &s.initial.attitude_error);
    put_vec(&mut m, "initial.attitude_rate", ANGLES, &s.initial.attitude_rate);

    put(&mut m, "uncertainty.kind", text(s.uncertainty.label()));
    put_vec(&mut m, "uncertainty.h0", ANGLES, &Vector3::repeat(Uncertainty::DEFAULT_H0));
    put(&mut m, "estimator.kind", text("first-order"));
    put(&mut m, "estimator.time_constant", Value::Num(FirstOrderTracker::DEFAULT_TIME_CONSTANT));

    let sat = SaturationLimits::default();
    put(&mut m, "saturation.enabled", Value::Bool(true));
    put(&mut m, "saturation.thrust_max", Value::Num(sat.thrust_max));
    put(&mut m, "saturation.moment_max", Value::Num(sat.moment_max));

    let o = RunOptions::default();
    put(&mut m, "report.settle_time", Value::Num(o.settle_time));
    put(&mut m, "report.identity_samples", Value::Num(o.identity_samples as f64));
    put(&mut m, "output.decimation", Value::Num(DEFAULT_DECIMATION as f64));
    put(&mut m, "output.plots", Value::Bool(false));
    put(&mut m, "output.dir", text("out"));

    if name == "custom" {
        for ch in CHANNELS {
            for field in HARMONIC_FIELDS {
                put(&mut m, &format!("trajectory.{ch}.{field}"), Value::Num(0.0));
            }
        }
    }
    m
}

fn allowed_texts(key: &str) -> Option<&'static [&'static str]> {
    match key {
        "scenario" => Some(&SCENARIOS),
        "fidelity" => Some(&FIDELITIES),
        "uncertainty.kind" => Some(&UNCERTAINTIES),
        "estimator.kind" => Some(&ESTIMATORS),
        _ => None,
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Num(_) => "a number",
        Value::Bool(_) => "true or false",
        Value::Text(_) => "text",
    }
}

fn assign_leaf(map: &mut Map, key: &str, value: Value, origin: &str) -> Result<(), CliError> {
    let current = &map[key];
    let ok = match (current, &value) {
        (Value::Num(_), Value::Num(v)) => v.is_finite(),
        (Value::Bool(_), Value::Bool(_)) => true,
        (Value::Text(_), Value::Text(t)) => allowed_texts(key).is_none_or(|allowed| allowed.contains(&t.as_str())),
        _ => false,
    };
    if !ok {
        let expected = match allowed_texts(key) {
            Some(allowed) => format!("one of {}", allowed.join(", ")),
            None if matches!(current, Value::Num(_)) => "a finite number".to_string(),
            None => kind_name(current).to_string(),
        };
        return Err(CliError::Config(format!("{origin}: key `{key}` expects {expected}, got `{value}`")));
    }
    map.insert(key.to_string(), value);
    Ok(())
}

fn apply(map: &mut Map, entry: &Entry) -> Result<(), CliError> {
    let key = entry.key.as_str();
    if key.starts_with("trajectory.") && !map.contains_key("trajectory.x.offset") {
        return Err(CliError::Config(format!("{}: `{key}` requires scenario = custom", entry.origin)));
    }
    if map.contains_key(key) {
        return match &entry.value {
            Raw::Scalar(v) => assign_leaf(map, key, v.clone(), &entry.origin),
            Raw::List(_) => Err(CliError::Config(format!("{}: key `{key}` takes a single value", entry.origin))),
        };
    }
    let prefix = format!("{key}.");
    let components: Vec<String> = map.keys().filter(|k| k.starts_with(&prefix) && !k[prefix.len()..].contains('.')).cloned().collect();
    if components.len() != 3 {
        return Err(CliError::Config(format!("{}: unknown key `{key}`", entry.origin)));
    }
    // Keep component order x, y, z / phi, theta, psi rather than alphabetical.
    let names = if map.contains_key(&format!("{key}.x")) { XYZ } else { ANGLES };
    match &entry.value {
        Raw::Scalar(v) => {
            for n in names {
                assign_leaf(map, &format!("{key}.{n}"), v.clone(), &entry.origin)?;
            }
        }
        Raw::List(vs) if vs.len() == 3 => {
            for (n, v) in names.iter().zip(vs) {
                assign_leaf(map, &format!("{key}.{n}"), v.clone(), &entry.origin)?;
            }
        }
        Raw::List(vs) => {
            return Err(CliError::Config(format!(
                "{}: key `{key}` takes one value or three, got {}",
                entry.origin,
                vs.len()
            )))
        }
    }
    Ok(())
}

impl RunConfig {
    /// Resolves layered assignments, later layers winning.
    pub fn resolve(layers: &[&[Entry]]) -> Result<Self, CliError> {
        let mut name = "orbital".to_string();
        for entry in layers.iter().flat_map(|l| l.iter()).filter(|e| e.key == "scenario") {
            match &entry.value {
                Raw::Scalar(Value::Text(t)) if SCENARIOS.contains(&t.as_str()) => name = t.clone(),
                other => {
                    return Err(CliError::Config(format!(
                        "{}: key `scenario` expects one of {}, got {other:?}",
                        entry.origin,
                        SCENARIOS.join(", ")
                    )))
                }
            }
        }
        let mut values = defaults(&name);
        for entry in layers.iter().flat_map(|l| l.iter()) {
            apply(&mut values, entry)?;
        }
        Self::build(values)
    }

    /// Reads a file and applies environment overrides and `extra` on top.
    pub fn load(path: &Path, extra: &[Entry]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        let file = parse(&text, &path.display().to_string())?;
        let env = env_entries(std::env::vars());
        Self::resolve(&[&file, &env, extra])
    }

    fn build(values: Map) -> Result<Self, CliError> {
        let num = |k: &str| match values.get(k) {
            Some(Value::Num(v)) => *v,
            other => unreachable!("{k} resolved to {other:?}"),
        };
        let flag = |k: &str| matches!(values.get(k), Some(Value::Bool(true)));
        let word = |k: &str| match values.get(k) {
            Some(Value::Text(t)) => t.clone(),
            other => unreachable!("{k} resolved to {other:?}"),
        };
        let vec = |prefix: &str, names: [&str; 3]| Vector3::from_fn(|i, _| num(&format!("{prefix}.{}", names[i])));
        let invalid = |e: quadbarrier::Error| CliError::Config(e.to_string());
        let count = |k: &str| -> Result<usize, CliError> {
            let v = num(k);
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::Config(format!("key `{k}` must be a positive integer, got {v}")))
            }
        };

        let name = word("scenario");
        let mut s = match name.as_str() {
            "custom" => {
                let harmonic = |ch: &str| {
                    let f = |field: &str| num(&format!("trajectory.{ch}.{field}"));
                    Harmonic {
                        offset: f("offset"),
                        ramp: f("ramp"),
                        amplitude: f("amplitude"),
                        frequency: f("frequency"),
                        phase: f("phase"),
                    }
                };
                Scenario {
                    trajectory: Trajectory::Custom(CustomTrajectory {
                        axes: [harmonic("x"), harmonic("y"), harmonic("z")],
                        yaw: harmonic("yaw"),
                    }),
                    ..Scenario::orbital()
                }
            }
            other => Scenario::by_name(other).expect("scenario name checked during resolution"),
        };
        s.duration = num("duration");
        s.dt = num("dt");
        s.fidelity = match word("fidelity").as_str() {
            "theory-exact" => Fidelity::TheoryExact,
            _ => Fidelity::Cascade,
        };

        let p = &mut s.params;
        p.mass = num("vehicle.m");
        p.inertia = vec("vehicle.j", XYZ);
        p.inertia_delta = vec("vehicle.j_delta", XYZ);
        p.inertia_bound = num("vehicle.j_delta_bound");
        p.arm_length = num("vehicle.l");
        p.thrust_coeff = num("vehicle.ct");
        p.moment_coeff = num("vehicle.cq");
        p.rotor_inertia = num("vehicle.jr");
        p.drag = vec("vehicle.drag", XYZ);
        p.gravity = num("vehicle.g");

        s.position_gains = PositionGains::new(vec("gains.position.k", XYZ), vec("gains.position.m", XYZ)).map_err(invalid)?;
        s.attitude_gains = AttitudeGains::new(vec("gains.attitude.z", ANGLES), vec("gains.attitude.n", ANGLES)).map_err(invalid)?;

        let c = &mut s.constraints;
        for i in 0..3 {
            c.position_bounds[i] = ErrorBounds {
                lower: num(&format!("bounds.position.lower.{}", XYZ[i])),
                upper: num(&format!("bounds.position.upper.{}", XYZ[i])),
            };
            c.attitude_bounds[i] = ErrorBounds {
                lower: num(&format!("bounds.attitude.lower.{}", ANGLES[i])),
                upper: num(&format!("bounds.attitude.upper.{}", ANGLES[i])),
            };
        }
        c.position_limits = vec("limits.position", XYZ);
        c.attitude_limits = vec("limits.attitude", ANGLES);

        s.initial.position_error = vec("initial.position_error", XYZ);
        s.initial.velocity = vec("initial.velocity", XYZ);
        s.initial.attitude_error = vec("initial.attitude_error", ANGLES);
        s.initial.attitude_rate = vec("initial.attitude_rate", ANGLES);

        s.uncertainty = match word("uncertainty.kind").as_str() {
            "none" => Uncertainty::None,
            "physical" => Uncertainty::Physical,
            _ => Uncertainty::Matched {
                h0: vec("uncertainty.h0", ANGLES),
            },
        };
        s.estimator = match word("estimator.kind").as_str() {
            "zero" => EstimatorKind::Zero,
            _ => EstimatorKind::FirstOrder {
                time_constant: num("estimator.time_constant"),
            },
        };
        s.saturation = flag("saturation.enabled").then(|| SaturationLimits {
            thrust_max: num("saturation.thrust_max"),
            moment_max: num("saturation.moment_max"),
        });
        s.validate().map_err(invalid)?;

        let decimation = count("output.decimation")?;
        let options = RunOptions {
            record_every: decimation,
            settle_time: num("report.settle_time"),
            identity_samples: count("report.identity_samples")?,
        };
        Ok(Self {
            scenario: s,
            options,
            plots: flag("output.plots"),
            out_dir: PathBuf::from(word("output.dir")),
            values,
        })
    }

    /// Every resolved key in a form `parse` reads back to the same configuration.
    pub fn echo(&self) -> String {
        let mut out = String::from("# resolved configuration\n");
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Whether `key` names a leaf or a three-component group.
    pub fn has_key(&self, key: &str) -> bool {
        self.values.contains_key(key) || ["x", "phi"].iter().any(|c| self.values.contains_key(&format!("{key}.{c}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> Result<RunConfig, CliError> {
        let entries = parse(text, "test")?;
        RunConfig::resolve(&[&entries])
    }

    #[test]
    fn empty_file_gives_orbital_defaults() {
        let c = resolve("").unwrap();
        assert_eq!(c.scenario.name(), "orbital");
        assert_eq!(c.scenario.params, quadbarrier::vehicle::VehicleParams::pelican());
        assert_eq!(c.options.record_every, 10);
        assert!(!c.plots);
    }

    #[test]
    fn negative_mass_is_rejected() {
        let err = resolve("vehicle.m = -1").unwrap_err();
        assert!(matches!(&err, CliError::Config(m) if m.contains("mass must be positive")), "{err}");
    }

    #[test]
    fn helix_bounds_echo() {
        let c = resolve("scenario = helix\n").unwrap();
        let echo = c.echo();
        for line in [
            "bounds.position.lower.x = 2.2",
            "bounds.position.lower.y = 2.3",
            "bounds.position.lower.z = 0.6",
            "bounds.position.upper.x = 0.2",
            "bounds.position.upper.y = 0.3",
            "bounds.position.upper.z = 0.2",
            "limits.position.z = 0.7",
        ] {
            assert!(echo.lines().any(|l| l == line), "missing {line}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let c = resolve("scenario = bow\ngains.position.k = [50, 60.5, 70]\nuncertainty.h0 = 0.1\ndt = 0.0005\n").unwrap();
        let again = resolve(&c.echo()).unwrap();
        assert_eq!(again.echo(), c.echo());
        assert_eq!(again.scenario.position_gains.stabilizer, Vector3::new(50.0, 60.5, 70.0));
        assert_eq!(again.scenario.uncertainty, Uncertainty::Matched { h0: Vector3::repeat(0.1) });
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        let err = resolve("dt = 0.001\n\nvehicle.mass = 2\n").unwrap_err().to_string();
        assert!(err.contains("test:3") && err.contains("vehicle.mass"), "{err}");
        let err = resolve("no equals sign").unwrap_err().to_string();
        assert!(err.contains("test:1"), "{err}");
        let err = resolve("fidelity = fast").unwrap_err().to_string();
        assert!(err.contains("cascade"), "{err}");
        let err = resolve("dt = 1\ndt = 2").unwrap_err().to_string();
        assert!(err.contains("already set"), "{err}");
        let err = resolve("trajectory.x.offset = 1").unwrap_err().to_string();
        assert!(err.contains("custom"), "{err}");
    }

    #[test]
    fn comments_and_quotes() {
        let c = resolve("# header\nscenario = \"helix\"  # trailing\noutput.plots = true\n").unwrap();
        assert_eq!(c.scenario.name(), "helix");
        assert!(c.plots);
    }

    #[test]
    fn initial_error_outside_bounds_is_a_config_error() {
        assert!(matches!(resolve("initial.position_error.x = 0.5"), Err(CliError::Config(_))));
    }

    #[test]
    fn env_overrides_win_over_file() {
        let file = parse("vehicle.m = 0.5", "f").unwrap();
        let env = env_entries([
            ("QUADBARRIER_VEHICLE__M".to_string(), "0.6".to_string()),
            ("UNRELATED".to_string(), "1".to_string()),
        ]);
        assert_eq!(env.len(), 1);
        let c = RunConfig::resolve(&[&file, &env]).unwrap();
        assert_eq!(c.scenario.params.mass, 0.6);
    }

    #[test]
    fn custom_trajectory_channels() {
        let c = resolve("scenario = custom\ntrajectory.z.offset = 1\ntrajectory.x.amplitude = 0.5\ntrajectory.x.frequency = 0.2\n").unwrap();
        let sample = c.scenario.trajectory.sample(0.0);
        assert_eq!(sample.position, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(sample.velocity.x, 0.1);
    }

    #[test]
    fn saturation_can_be_disabled() {
        assert!(resolve("saturation.enabled = false").unwrap().scenario.saturation.is_none());
        assert!(resolve("output.decimation = 0").is_err());
    }
}
