//! SVG figures derived from sweep CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::record::SweepRecord;
use super::sweep::{summarize, PointSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Ideal and estimated spot offset with spot error on a second axis.
    Spot,
    /// Peak-pixel SNR per pump power.
    Snr,
    /// Mean target error per baseline.
    Rmse,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spot" => Ok(PlotKind::Spot),
            "snr" => Ok(PlotKind::Snr),
            "rmse" => Ok(PlotKind::Rmse),
            other => Err(Error::Config(format!("unknown plot kind `{other}` (spot, snr, rmse)"))),
        }
    }
}

const SIZE: (u32, u32) = (800, 540);
const COLORS: [RGBColor; 6] = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

/// `[lo, hi]` padded by 5%; a degenerate range is widened to unit size.
fn fit(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if hi - lo < 1e-12 * hi.abs().max(1.0) {
        return Some((lo - 0.5, hi + 0.5));
    }
    let pad = 0.05 * (hi - lo);
    Some((lo - pad, hi + pad))
}

fn radial(s: &PointSummary) -> f64 {
    s.target[0].hypot(s.target[1])
}

/// Position along the sweep: `y` when it varies, otherwise `x`.
fn axis_of(points: &[PointSummary]) -> (fn(&PointSummary) -> f64, &'static str) {
    let varies_y = points.iter().any(|p| p.target[1] != points[0].target[1]);
    if varies_y {
        (|p| p.target[1] * 100.0, "y_T (cm)")
    } else {
        (|p| p.target[0] * 100.0, "x_T (cm)")
    }
}

/// (radius in cm, ideal spot, mean estimated spot, spot RMSE).
type SpotRow = (f64, [f64; 2], Option<[f64; 2]>, Option<f64>);

fn spot_figure(points: &[PointSummary], path: &Path, depth: f64) -> Result<()> {
    let rows: Vec<SpotRow> = points
        .iter()
        .filter_map(|p| Some((radial(p) * 100.0, p.tx1_spot_true?, p.tx1_spot_mean, p.tx1_rmse_spot)))
        .collect();
    let offset = |c: [f64; 2]| c[0].hypot(c[1]) * 1e3;
    let xr = fit(rows.iter().map(|r| r.0)).ok_or_else(|| Error::EmptyPlot("no spot rows".into()))?;
    let yr = fit(rows.iter().map(|r| offset(r.1)).chain(rows.iter().filter_map(|r| r.2.map(offset))))
        .ok_or_else(|| Error::EmptyPlot("no spot rows".into()))?;
    let er = fit(rows.iter().filter_map(|r| r.3.map(|e| e * 1e6)).chain([0.0])).unwrap_or((0.0, 1.0));

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Spot position on sensor, z = {depth} m"), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(44)
        .y_label_area_size(64)
        .right_y_label_area_size(64)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(plot_err)?
        .set_secondary_coord(xr.0..xr.1, er.0..er.1);
    chart
        .configure_mesh()
        .x_desc("radial distance (cm)")
        .y_desc("spot offset (mm)")
        .draw()
        .map_err(plot_err)?;
    chart
        .configure_secondary_axes()
        .y_desc("RMSE_spot (um)")
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(DashedLineSeries::new(
            rows.iter().map(|r| (r.0, offset(r.1))),
            6,
            4,
            BLUE.stroke_width(2),
        ))
        .map_err(plot_err)?
        .label("ideal f tan(theta)")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 18, y)], BLUE));
    chart
        .draw_series(rows.iter().filter_map(|r| r.2.map(|c| Circle::new((r.0, offset(c)), 4, RED.filled()))))
        .map_err(plot_err)?
        .label("estimated")
        .legend(|(x, y)| Circle::new((x + 9, y), 4, RED.filled()));
    chart
        .draw_secondary_series(LineSeries::new(
            rows.iter().filter_map(|r| r.3.map(|e| (r.0, e * 1e6))),
            GREEN.stroke_width(2),
        ))
        .map_err(plot_err)?
        .label("RMSE_spot")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 18, y)], GREEN));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn grouped_figure(
    series: &BTreeMap<String, Vec<(f64, f64)>>,
    path: &Path,
    title: &str,
    x_desc: &str,
    y_desc: &str,
) -> Result<()> {
    let all = || series.values().flatten();
    let xr = fit(all().map(|p| p.0)).ok_or_else(|| Error::EmptyPlot(format!("{title}: no points")))?;
    let yr = fit(all().map(|p| p.1)).ok_or_else(|| Error::EmptyPlot(format!("{title}: no points")))?;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(44)
        .y_label_area_size(64)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_desc)
        .y_desc(y_desc)
        .draw()
        .map_err(plot_err)?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 18, y)], color));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

fn by_depth(points: Vec<PointSummary>) -> BTreeMap<u64, Vec<PointSummary>> {
    let mut out: BTreeMap<u64, Vec<PointSummary>> = BTreeMap::new();
    for p in points {
        out.entry(p.depth_m.to_bits()).or_default().push(p);
    }
    out
}

/// Writes one SVG per target plane into `out_dir` and returns the paths.
pub fn emit_plots(records: &[SweepRecord], kind: PlotKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::EmptyPlot("sweep has no rows".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = vec![];
    for (_, points) in by_depth(summarize(records)) {
        let depth = points[0].depth_m;
        let name = match kind {
            PlotKind::Spot => "spot",
            PlotKind::Snr => "snr",
            PlotKind::Rmse => "rmse",
        };
        let path = out_dir.join(format!("{name}_z{depth}m.svg"));
        match kind {
            PlotKind::Spot => spot_figure(&points, &path, depth)?,
            PlotKind::Snr => {
                let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
                for p in &points {
                    if let Some(s) = p.tx1_snr_db.filter(|s| s.is_finite()) {
                        series
                            .entry(format!("P_in = {:>5} W", p.p_in_w))
                            .or_default()
                            .push((radial(p) * 100.0, s));
                    }
                }
                grouped_figure(&series, &path, &format!("Peak-pixel SNR, z = {depth} m"), "radial distance (cm)", "SNR (dB)")?;
            }
            PlotKind::Rmse => {
                let (pos, x_desc) = axis_of(&points);
                let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
                for p in &points {
                    if let Some(e) = p.mean_rmse_tgt {
                        series
                            .entry(format!("b = {:.2} cm", p.baseline_m * 100.0))
                            .or_default()
                            .push((pos(p), e * 100.0));
                    }
                }
                grouped_figure(&series, &path, &format!("Localization error, z = {depth} m"), x_desc, "RMSE_tgt (cm)")?;
            }
        }
        written.push(path);
    }
    Ok(written)
}
