mod config;
mod error;
mod plots;
mod telemetry;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use quadbarrier::sim::{run_scenario, RunOutput};
use quadbarrier::verify::{full_suite, Profile};
use rayon::prelude::*;

use config::{Entry, Raw, RunConfig, Value};
use error::{io, CliError};

#[derive(Parser)]
#[command(name = "quadbarrier", version, about = "Constrained quadrotor tracking with barrier Lyapunov backstepping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write telemetry, a summary and optional plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write SVG figures.
        #[arg(long)]
        plots: bool,
    },
    /// Run the property suite over all modules.
    Verify {
        /// Smaller sample counts and shorter runs.
        #[arg(long)]
        fast: bool,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Run one simulation per value of a configuration key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted key, e.g. `uncertainty.h0` or `gains.position.k.x`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Directory for `sweep.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn command_line(key: &str, value: Value) -> Entry {
    Entry {
        key: key.to_string(),
        value: Raw::Scalar(value),
        origin: "command line".to_string(),
    }
}

fn simulate(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    run_scenario(&cfg.scenario, &cfg.options).map_err(|e| CliError::Config(e.to_string()))
}

fn triple(v: &[f64; 3]) -> String {
    format!("[{:.3e}, {:.3e}, {:.3e}]", v[0], v[1], v[2])
}

fn run(config: &Path, out: Option<PathBuf>, plots: bool) -> Result<(), CliError> {
    let mut extra = Vec::new();
    if let Some(dir) = out {
        extra.push(command_line("output.dir", Value::Text(dir.display().to_string())));
    }
    if plots {
        extra.push(command_line("output.plots", Value::Bool(true)));
    }
    let cfg = RunConfig::load(config, &extra)?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(io(dir.display()))?;
    std::fs::write(dir.join("config.resolved"), cfg.echo()).map_err(io(dir.display()))?;

    let start = Instant::now();
    let output = simulate(&cfg)?;
    let elapsed = start.elapsed().as_secs_f64();
    telemetry::write_csv(&dir.join("telemetry.csv"), &output.telemetry)?;
    telemetry::write_report(&dir.join("report.json"), &output.report)?;
    if cfg.plots {
        plots::write_all(dir, &output.telemetry, &cfg.scenario)?;
    }

    let r = &output.report;
    println!("scenario {} ({:?}, {} uncertainty), {} steps in {elapsed:.2} s", r.scenario, r.fidelity, r.uncertainty, r.steps_completed);
    println!("max |gamma| = {} m, max |upsilon| = {} rad", triple(&r.max_position_error), triple(&r.max_attitude_error));
    println!("terminal gamma = {} m, terminal upsilon = {} rad", triple(&r.terminal_position_error), triple(&r.terminal_attitude_error));
    println!("saturation duty {:.3e}, bound violations {}", r.saturation_duty, r.bound_violations);
    for w in &r.assumption_warnings {
        println!("warning: {w}");
    }
    println!("wrote {}", dir.display());
    match &r.abort_reason {
        Some(reason) => Err(CliError::Verification(reason.clone())),
        None if r.bound_violations > 0 => Err(CliError::Verification(format!("{} bound violations", r.bound_violations))),
        None => Ok(()),
    }
}

fn verify(fast: bool, seed: u64) -> Result<(), CliError> {
    let profile = Profile {
        seed,
        ..if fast { Profile::fast() } else { Profile::full() }
    };
    let checks = full_suite(&profile);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} checks failed")));
    }
    Ok(())
}

struct Cell {
    value: String,
    outcome: Result<quadbarrier::sim::VerificationReport, String>,
}

fn sweep_table(cells: &[Cell]) -> Vec<Vec<String>> {
    let mut rows = vec![["value", "status", "violations", "max_gamma", "max_upsilon", "saturation_duty"].map(String::from).to_vec()];
    for c in cells {
        rows.push(match &c.outcome {
            Ok(r) => vec![
                c.value.clone(),
                match &r.abort_reason {
                    None => "ok".to_string(),
                    Some(reason) => format!("aborted: {reason}"),
                },
                r.bound_violations.to_string(),
                telemetry::number(r.max_position_error.iter().cloned().fold(0.0, f64::max)),
                telemetry::number(r.max_attitude_error.iter().cloned().fold(0.0, f64::max)),
                telemetry::number(r.saturation_duty),
            ],
            Err(e) => vec![c.value.clone(), format!("failed: {e}"), String::new(), String::new(), String::new(), String::new()],
        });
    }
    rows
}

fn sweep(config: &Path, param: &str, values: &str, out: Option<PathBuf>) -> Result<(), CliError> {
    let base = RunConfig::load(config, &[])?;
    if !base.has_key(param) {
        return Err(CliError::Config(format!("unknown parameter `{param}`")));
    }
    let values: Vec<String> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect();
    let configs = values
        .iter()
        .map(|v| {
            let entry = Entry {
                key: param.to_string(),
                value: config::parse_raw(v),
                origin: format!("sweep value {v}"),
            };
            RunConfig::load(config, &[entry])
        })
        .collect::<Result<Vec<_>, _>>()?;

    let cells: Vec<Cell> = configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, value)| Cell {
            value: value.clone(),
            outcome: run_scenario(&cfg.scenario, &quadbarrier::sim::RunOptions { record_every: 0, ..cfg.options }).map(|o| o.report).map_err(|e| e.to_string()),
        })
        .collect();

    let table = sweep_table(&cells);
    println!("{param}");
    for row in &table {
        println!("{}", row.join("\t"));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(io(dir.display()))?;
        let path = dir.join("sweep.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for row in &table {
            w.write_record(row).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        w.flush().map_err(io(path.display()))?;
    }
    let failed = cells.iter().filter(|c| !matches!(&c.outcome, Ok(r) if r.passed())).count();
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} of {} sweep cells failed", cells.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, plots } => run(&config, out, plots),
        Command::Verify { fast, seed } => verify(fast, seed),
        Command::Sweep { config, param, values, out } => sweep(&config, &param, &values, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
