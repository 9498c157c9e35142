//! Static SVG plots drawn from logged data.
//!
//! Each function returns the exact series it drew so callers can check the
//! picture against the log.

use std::path::Path;

use plotters::prelude::*;

use super::runlog::RunLog;
use crate::error::{Error, Result};

const PALETTE: [RGBColor; 4] = [RED, BLUE, GREEN, MAGENTA];

fn plot_err<E: std::fmt::Debug>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::Plot(format!("{}: {e:?}", path.display()))
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

/// Error norm against tick, one line per log.
pub fn error_profile(logs: &[RunLog], path: &Path) -> Result<Vec<Vec<(f64, f64)>>> {
    let series: Vec<Vec<(f64, f64)>> = logs
        .iter()
        .map(|l| l.rows.iter().map(|r| (r.step as f64, r.e_norm)).collect())
        .collect();
    let x_max = series.iter().flatten().map(|p| p.0).fold(1.0, f64::max);
    let y_max = series.iter().flatten().map(|p| p.1).fold(1e-6, f64::max) * 1.05;
    let err = plot_err(path);

    let root = SVGBackend::new(path, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("feature error |e| (m)", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)
        .map_err(&err)?;
    chart.configure_mesh().x_desc("step").y_desc("|e| (m)").draw().map_err(&err)?;
    for (i, (log, s)) in logs.iter().zip(&series).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(s.iter().copied(), &color))
            .map_err(&err)?
            .label(log.meta.controller.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(series)
}

/// Measured and desired feature paths in camera coordinates.
pub type PathSeries = (Vec<(f64, f64, f64)>, Vec<(f64, f64, f64)>);

pub fn trajectory_3d(log: &RunLog, path: &Path) -> Result<PathSeries> {
    let actual: Vec<_> = log.rows.iter().map(|r| (r.y.x, r.y.y, r.y.z)).collect();
    let desired: Vec<_> = log.rows.iter().map(|r| (r.y_des.x, r.y_des.y, r.y_des.z)).collect();
    let both = || actual.iter().chain(&desired);
    let xs = span(both().map(|p| p.0));
    let ys = span(both().map(|p| p.1));
    let zs = span(both().map(|p| p.2));
    let err = plot_err(path);

    let root = SVGBackend::new(path, (900, 760)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("{} / {}", log.meta.scenario, log.meta.controller), ("sans-serif", 20))
        .margin(12)
        .build_cartesian_3d(xs.0..xs.1, zs.0..zs.1, ys.0..ys.1)
        .map_err(&err)?;
    chart.with_projection(|mut pb| {
        pb.yaw = 0.6;
        pb.pitch = 0.4;
        pb.scale = 0.85;
        pb.into_matrix()
    });
    chart.configure_axes().draw().map_err(&err)?;
    // camera depth goes on the vertical axis
    chart
        .draw_series(LineSeries::new(desired.iter().map(|p| (p.0, p.2, p.1)), &BLUE))
        .map_err(&err)?
        .label("desired")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], BLUE));
    chart
        .draw_series(LineSeries::new(actual.iter().map(|p| (p.0, p.2, p.1)), &RED))
        .map_err(&err)?
        .label("measured")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], RED));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok((actual, desired))
}

/// Camera x and y of measured and desired features against tick.
pub fn feature_profile(log: &RunLog, path: &Path) -> Result<[Vec<(f64, f64)>; 4]> {
    let col = |f: fn(&super::runlog::LogRow) -> f64| -> Vec<(f64, f64)> { log.rows.iter().map(|r| (r.step as f64, f(r))).collect() };
    let series = [col(|r| r.y.x), col(|r| r.y.y), col(|r| r.y_des.x), col(|r| r.y_des.y)];
    let x_max = log.rows.last().map_or(1.0, |r| (r.step as f64).max(1.0));
    let ys = span(series.iter().flatten().map(|p| p.1));
    let err = plot_err(path);

    let root = SVGBackend::new(path, (900, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("camera-frame x / y (m)", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, ys.0..ys.1)
        .map_err(&err)?;
    chart.configure_mesh().x_desc("step").draw().map_err(&err)?;
    let styles = [
        ("x", RED.stroke_width(2)),
        ("y", BLUE.stroke_width(2)),
        ("x desired", RED.mix(0.4).stroke_width(1)),
        ("y desired", BLUE.mix(0.4).stroke_width(1)),
    ];
    for (s, (label, style)) in series.iter().zip(styles) {
        chart
            .draw_series(LineSeries::new(s.iter().copied(), style))
            .map_err(&err)?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], style));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)?;
    Ok(series)
}
