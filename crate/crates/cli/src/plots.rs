//! Static SVG figures of a run.

use std::path::Path;

use plotters::coord::Shift;
use plotters::prelude::*;
use quadbarrier::sim::{Scenario, TelemetryRow};

use crate::error::CliError;

const AXES: [&str; 3] = ["x", "y", "z"];
const ANGLES: [&str; 3] = ["phi", "theta", "psi"];

type Area<'a> = DrawingArea<SVGBackend<'a>, Shift>;

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("plotting: {e}"))
}

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
    color: RGBColor,
}

/// One time-series panel; `levels` are drawn as dashed horizontal lines.
fn panel(area: &Area, title: &str, series: &[Series], levels: &[f64]) -> Result<(), CliError> {
    let t_max = series.iter().flat_map(|s| s.points.last()).map(|p| p.0).fold(1e-9, f64::max);
    let values = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain(levels.iter().copied());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0) };
    let pad = 0.05 * (hi - lo);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(28)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..t_max, (lo - pad)..(hi + pad))
        .map_err(fail)?;
    chart.configure_mesh().x_desc("t (s)").max_light_lines(2).draw().map_err(fail)?;
    for s in series {
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), s.color.stroke_width(1)))
            .map_err(fail)?
            .label(s.label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], s.color));
    }
    for &level in levels {
        chart
            .draw_series(DashedLineSeries::new([(0.0, level), (t_max, level)], 6, 4, RED.stroke_width(1)))
            .map_err(fail)?;
    }
    if series.len() > 1 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(fail)?;
    }
    Ok(())
}

fn column(rows: &[TelemetryRow], f: impl Fn(&TelemetryRow) -> f64) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r.t, f(r))).collect()
}

fn path_figure(path: &Path, rows: &[TelemetryRow]) -> Result<(), CliError> {
    let root = SVGBackend::new(path, (800, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(fail)?;
    let all = rows.iter().flat_map(|r| [r.state.position, r.desired_position]);
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in all {
        for i in 0..3 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let range = |i: usize| {
        let pad = 0.05 * (hi[i] - lo[i]).max(1e-3);
        (lo[i] - pad)..(hi[i] + pad)
    };
    let mut chart = ChartBuilder::on(&root)
        .caption("path vs desired", ("sans-serif", 18))
        .margin(16)
        .build_cartesian_3d(range(0), range(2), range(1))
        .map_err(fail)?;
    chart.configure_axes().draw().map_err(fail)?;
    let actual = rows.iter().map(|r| (r.state.position.x, r.state.position.z, r.state.position.y));
    let desired = rows.iter().map(|r| (r.desired_position.x, r.desired_position.z, r.desired_position.y));
    chart
        .draw_series(LineSeries::new(desired, RED.stroke_width(1)))
        .map_err(fail)?
        .label("desired")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED));
    chart
        .draw_series(LineSeries::new(actual, BLUE.stroke_width(1)))
        .map_err(fail)?
        .label("actual")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
    chart.configure_series_labels().border_style(BLACK).draw().map_err(fail)?;
    root.present().map_err(fail)
}

fn error_figure(path: &Path, rows: &[TelemetryRow], s: &Scenario) -> Result<(), CliError> {
    let root = SVGBackend::new(path, (1200, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(fail)?;
    let areas = root.split_evenly((2, 3));
    for i in 0..3 {
        let b = s.constraints.position_bounds[i];
        let series = [Series { label: AXES[i], points: column(rows, |r| r.position_error[i]), color: BLUE }];
        panel(&areas[i], &format!("gamma_{} (m)", AXES[i]), &series, &[-b.lower, b.upper])?;
        let b = s.constraints.attitude_bounds[i];
        let series = [Series { label: ANGLES[i], points: column(rows, |r| r.attitude_error[i]), color: BLUE }];
        panel(&areas[3 + i], &format!("upsilon_{} (rad)", ANGLES[i]), &series, &[-b.lower, b.upper])?;
    }
    root.present().map_err(fail)
}

fn input_figure(path: &Path, rows: &[TelemetryRow], s: &Scenario) -> Result<(), CliError> {
    let root = SVGBackend::new(path, (1000, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(fail)?;
    let areas = root.split_evenly((2, 2));
    let thrust_levels: Vec<f64> = s.saturation.map(|l| vec![l.thrust_max]).unwrap_or_default();
    panel(&areas[0], "u_T (N)", &[Series { label: "u_T", points: column(rows, |r| r.inputs.thrust), color: BLUE }], &thrust_levels)?;
    let moment_levels: Vec<f64> = s.saturation.map(|l| vec![-l.moment_max, l.moment_max]).unwrap_or_default();
    for i in 0..3 {
        let series = [Series { label: ANGLES[i], points: column(rows, |r| r.inputs.moments[i]), color: BLUE }];
        panel(&areas[1 + i], &format!("u_{} (N m)", ANGLES[i]), &series, &moment_levels)?;
    }
    root.present().map_err(fail)
}

fn lyapunov_figure(path: &Path, rows: &[TelemetryRow]) -> Result<(), CliError> {
    let root = SVGBackend::new(path, (1200, 700)).into_drawing_area();
    root.fill(&WHITE).map_err(fail)?;
    let areas = root.split_evenly((2, 3));
    for i in 0..3 {
        let series = [Series { label: AXES[i], points: column(rows, |r| r.position_energy[i]), color: BLUE }];
        panel(&areas[i], &format!("E_{}", AXES[i]), &series, &[])?;
        let series = [Series { label: ANGLES[i], points: column(rows, |r| r.attitude_energy[i]), color: BLUE }];
        panel(&areas[3 + i], &format!("D_{}", ANGLES[i]), &series, &[])?;
    }
    root.present().map_err(fail)
}

/// Writes `path.svg`, `errors.svg`, `inputs.svg` and `lyapunov.svg` into `dir`.
pub fn write_all(dir: &Path, rows: &[TelemetryRow], scenario: &Scenario) -> Result<(), CliError> {
    if rows.is_empty() {
        return Ok(());
    }
    path_figure(&dir.join("path.svg"), rows)?;
    error_figure(&dir.join("errors.svg"), rows, scenario)?;
    input_figure(&dir.join("inputs.svg"), rows, scenario)?;
    lyapunov_figure(&dir.join("lyapunov.svg"), rows)
}
