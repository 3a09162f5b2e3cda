//! Static SVG line plots: states, outputs and edge states stacked as in the
//! published figures, plus gains and the synchronization error.

use plotters::prelude::*;

use crate::run::Outcome;

const WIDTH: u32 = 900;
const PANEL_HEIGHT: u32 = 280;
const MAX_POINTS: usize = 2000;

/// One named line.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

fn collect(
    outcome: &Outcome,
    label: impl Fn(usize) -> String,
    count: usize,
    value: impl Fn(&[f64], usize) -> f64,
) -> Vec<Series> {
    let traj = &outcome.trajectory;
    let step = stride(traj.len());
    let last = traj.len().saturating_sub(1);
    let idx: Vec<usize> = (0..traj.len()).filter(|k| k % step == 0 || *k == last).collect();
    (0..count)
        .map(|j| Series {
            label: label(j),
            points: idx.iter().map(|&k| (traj.times[k], value(traj.state(k), j))).collect(),
        })
        .collect()
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in series.iter().flat_map(|s| &s.points) {
        if p.1.is_finite() {
            b = (b.0.min(p.0), b.1.max(p.0), b.2.min(p.1), b.3.max(p.1));
        }
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, -1.0, 1.0);
    }
    if b.1 <= b.0 {
        b.1 = b.0 + 1.0;
    }
    let pad = 0.05 * (b.3 - b.2).max(1e-9);
    (b.0, b.1, b.2 - pad, b.3 + pad)
}

type Area<'a> = DrawingArea<SVGBackend<'a>, plotters::coord::Shift>;

fn panel(area: &Area, title: &str, series: &[Series], log_y: bool) -> Result<(), Box<dyn std::error::Error>> {
    let (x0, x1, y0, y1) = bounds(series);
    let mut builder = ChartBuilder::on(area);
    builder
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(60);
    let legend = series.len() <= 12;
    if log_y {
        let lo = series
            .iter()
            .flat_map(|s| &s.points)
            .map(|p| p.1)
            .filter(|v| *v > 0.0 && v.is_finite())
            .fold(f64::INFINITY, f64::min);
        let lo = if lo.is_finite() { lo * 0.5 } else { 1e-12 };
        let hi = y1.max(lo * 10.0);
        let mut chart = builder.build_cartesian_2d(x0..x1, (lo..hi).log_scale())?;
        chart.configure_mesh().x_desc("t").draw()?;
        for (i, s) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            let pts = s.points.iter().map(|&(t, v)| (t, v.max(lo)));
            chart
                .draw_series(LineSeries::new(pts, color.stroke_width(1)))?
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        if legend {
            chart
                .configure_series_labels()
                .border_style(BLACK)
                .background_style(WHITE.mix(0.8))
                .draw()?;
        }
    } else {
        let mut chart = builder.build_cartesian_2d(x0..x1, y0..y1)?;
        chart.configure_mesh().x_desc("t").draw()?;
        for (i, s) in series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(1)))?
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        }
        if legend {
            chart
                .configure_series_labels()
                .border_style(BLACK)
                .background_style(WHITE.mix(0.8))
                .draw()?;
        }
    }
    Ok(())
}

/// Renders stacked panels into one SVG document.
pub fn render_panels(panels: &[(String, Vec<Series>, bool)]) -> String {
    let mut svg = String::new();
    {
        let height = PANEL_HEIGHT * panels.len().max(1) as u32;
        let root = SVGBackend::with_string(&mut svg, (WIDTH, height)).into_drawing_area();
        let _ = root.fill(&WHITE);
        let areas = root.split_evenly((panels.len().max(1), 1));
        for (area, (title, series, log_y)) in areas.iter().zip(panels) {
            // A failed panel leaves a blank area rather than aborting the run.
            let _ = panel(area, title, series, *log_y);
        }
        let _ = root.present();
    }
    svg
}

/// `figure.svg`, `gains.svg` (adaptive families) and `sync_error.svg`.
pub fn render_all(outcome: &Outcome) -> Vec<(String, String)> {
    let lp = &outcome.built.closed_loop;
    let l = lp.layout().clone();
    let c = lp.controller();
    let nn = l.n_nodes;
    let mut files = Vec::new();

    let x = l.x.start;
    let n = l.n;
    let mut panels = vec![(
        "states x_i,1".to_string(),
        collect(outcome, |i| format!("x{},1", i + 1), nn, |z, i| z[x + i * n]),
        false,
    )];
    let q = l.q;
    let ys: Vec<Series> = {
        let traj = &outcome.trajectory;
        let step = stride(traj.len());
        let last = traj.len().saturating_sub(1);
        let idx: Vec<usize> = (0..traj.len()).filter(|k| k % step == 0 || *k == last).collect();
        let outs: Vec<(f64, Vec<f64>)> = idx
            .iter()
            .map(|&k| (traj.times[k], lp.channels(traj.state(k)).y))
            .collect();
        (0..nn * q)
            .map(|j| Series {
                label: if q == 1 {
                    format!("y{}", j + 1)
                } else {
                    format!("y{},{}", j / q + 1, j % q + 1)
                },
                points: outs.iter().map(|(t, y)| (*t, y[j])).collect(),
            })
            .collect()
    };
    panels.push(("outputs y_i".to_string(), ys, false));
    if c.eta_dim() > 0 {
        let e0 = l.eta.start;
        let ne = lp.ops().n_edges();
        panels.push((
            "edge states eta_g".to_string(),
            collect(outcome, |g| format!("eta{}", g + 1), ne, |z, g| z[e0 + g * q]),
            false,
        ));
    }
    files.push(("figure.svg".to_string(), render_panels(&panels)));

    if c.gain_dim() > 0 {
        let g0 = l.gains.start;
        let prefix = if c.gains_on_nodes() { "k" } else { "kappa" };
        let gains = collect(
            outcome,
            |j| format!("{prefix}{}", j + 1),
            c.gain_dim(),
            |z, j| z[g0 + j],
        );
        files.push((
            "gains.svg".to_string(),
            render_panels(&[(format!("adaptive gains {prefix}"), gains, false)]),
        ));
    }

    let m = &outcome.metrics;
    let step = stride(m.times.len());
    let last = m.times.len().saturating_sub(1);
    let err = Series {
        label: "e".into(),
        points: (0..m.times.len())
            .filter(|k| k % step == 0 || *k == last)
            .map(|k| (m.times[k], m.errors[k]))
            .collect(),
    };
    files.push((
        "sync_error.svg".to_string(),
        render_panels(&[("sync error max_i |y_i - mean y|".to_string(), vec![err], true)]),
    ));
    files
}
