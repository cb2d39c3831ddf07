//! Minimal SVG charts for reports: line, grouped bar, heatmap, scatter.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 30.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// A named polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { name: name.into(), x, y }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
}

impl Axes {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), log_y: false }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    log_y: bool,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let (l, r) = (MARGIN.0, WIDTH - MARGIN.1);
        l + (x - self.x.0) / (self.x.1 - self.x.0) * (r - l)
    }

    fn ty(&self, y: f64) -> f64 {
        if self.log_y {
            y.log10()
        } else {
            y
        }
    }

    fn py(&self, y: f64) -> f64 {
        let (t, b) = (MARGIN.2, HEIGHT - MARGIN.3);
        b - (self.ty(y) - self.y.0) / (self.y.1 - self.y.0) * (b - t)
    }
}

fn header(out: &mut String, axes: &Axes) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&axes.title)
    );
}

fn axes_box(out: &mut String, frame: &Frame, axes: &Axes, x_ticks: bool) {
    let (l, r, t, b) = (MARGIN.0, WIDTH - MARGIN.1, MARGIN.2, HEIGHT - MARGIN.3);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let yv = frame.y.0 + f * (frame.y.1 - frame.y.0);
        let y = b - f * (b - t);
        let label = if frame.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#, l - 4.0, y + 4.0);
        if x_ticks {
            let xv = frame.x.0 + f * (frame.x.1 - frame.x.0);
            let x = l + f * (r - l);
            let _ = writeln!(out, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{xv:.3}</text>"#, b + 16.0);
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 8.0,
        escape(&axes.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(&axes.y_label)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN.2 + 14.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN.1 - 150.0;
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            PALETTE[i % PALETTE.len()],
            x + 26.0,
            y + 4.0,
            escape(name)
        );
    }
}

/// Line chart of several series sharing axes. Non-finite points break lines.
pub fn line_chart(series: &[Series], axes: &Axes) -> Result<String> {
    let keep = |v: f64| v.is_finite() && (!axes.log_y || v > 0.0);
    let x = finite_range(series.iter().flat_map(|s| s.x.iter().copied()))
        .ok_or_else(|| Error::Shape("line chart has no finite x values".into()))?;
    let y = finite_range(series.iter().flat_map(|s| s.y.iter().copied()).filter(|&v| keep(v)).map(|v| {
        if axes.log_y {
            v.log10()
        } else {
            v
        }
    }))
    .ok_or_else(|| Error::Shape("line chart has no plottable y values".into()))?;
    let frame = Frame { x, y, log_y: axes.log_y };
    let mut out = String::new();
    header(&mut out, axes);
    axes_box(&mut out, &frame, axes, true);
    for (i, s) in series.iter().enumerate() {
        if s.x.len() != s.y.len() {
            return Err(Error::Shape(format!("series {} has mismatched x/y lengths", s.name)));
        }
        let mut d = String::new();
        let mut pen_down = false;
        for (&xv, &yv) in s.x.iter().zip(&s.y) {
            if !(xv.is_finite() && keep(yv)) {
                pen_down = false;
                continue;
            }
            let cmd = if pen_down { 'L' } else { 'M' };
            let _ = write!(d, "{cmd}{:.2} {:.2} ", frame.px(xv), frame.py(yv));
            pen_down = true;
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            d.trim_end(),
            PALETTE[i % PALETTE.len()]
        );
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Grouped bars: `values[g][s]` is series `s` within group `g`.
pub fn bar_chart(
    groups: &[String],
    series_names: &[String],
    values: &[Vec<f64>],
    axes: &Axes,
) -> Result<String> {
    if groups.len() != values.len() || values.iter().any(|v| v.len() != series_names.len()) {
        return Err(Error::Shape("bar chart values do not match group and series counts".into()));
    }
    let hi = values.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let lo = values.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0, f64::min);
    let frame = Frame {
        x: (0.0, groups.len().max(1) as f64),
        y: if hi > lo { (lo, hi * 1.05) } else { (0.0, 1.0) },
        log_y: false,
    };
    let mut out = String::new();
    header(&mut out, axes);
    axes_box(&mut out, &frame, axes, false);
    let slot = 0.8 / series_names.len().max(1) as f64;
    for (g, row) in values.iter().enumerate() {
        for (s, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let x0 = frame.px(g as f64 + 0.1 + s as f64 * slot);
            let x1 = frame.px(g as f64 + 0.1 + (s + 1) as f64 * slot);
            let (ya, yb) = (frame.py(v), frame.py(0.0));
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                ya.min(yb),
                x1 - x0,
                (ya - yb).abs(),
                PALETTE[s % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            frame.px(g as f64 + 0.5),
            HEIGHT - MARGIN.3 + 16.0,
            escape(&groups[g])
        );
    }
    let names: Vec<&str> = series_names.iter().map(String::as_str).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    Ok(out)
}

fn colormap(t: f64) -> String {
    // Dark blue through yellow.
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * t.powf(0.8)) as u8;
    let g = (230.0 * t) as u8;
    let b = (120.0 * (1.0 - t) + 40.0) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of `z[row][col]` with rows along y (`y` centres) and columns along x.
/// Colour scale is log10 of `z`, floored at `max * 1e-6`.
pub fn heatmap(x: &[f64], y: &[f64], z: &[Vec<f64>], axes: &Axes) -> Result<String> {
    if z.len() != y.len() || z.iter().any(|r| r.len() != x.len()) || x.is_empty() || y.is_empty() {
        return Err(Error::Shape("heatmap grid does not match axes".into()));
    }
    let zmax = z.iter().flatten().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let floor = if zmax > 0.0 { zmax * 1e-6 } else { 1.0 };
    let (lo, hi) = (floor.log10(), zmax.max(floor).log10());
    let step = |v: &[f64]| {
        if v.len() > 1 {
            (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64
        } else {
            1.0
        }
    };
    let (dx, dy) = (step(x), step(y));
    let frame = Frame {
        x: (x[0] - dx / 2.0, x[x.len() - 1] + dx / 2.0),
        y: (y[0] - dy / 2.0, y[y.len() - 1] + dy / 2.0),
        log_y: false,
    };
    let mut out = String::new();
    header(&mut out, axes);
    for (r, row) in z.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let t = if hi > lo { (v.max(floor).log10() - lo) / (hi - lo) } else { 0.0 };
            let (x0, x1) = (frame.px(x[c] - dx / 2.0), frame.px(x[c] + dx / 2.0));
            let (y0, y1) = (frame.py(y[r] + dy / 2.0), frame.py(y[r] - dy / 2.0));
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                (x1 - x0).max(0.5),
                (y1 - y0).max(0.5),
                colormap(t)
            );
        }
    }
    axes_box(&mut out, &frame, axes, true);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Scatter of (x, y) points, one colour per series.
pub fn scatter(series: &[Series], axes: &Axes) -> Result<String> {
    let x = finite_range(series.iter().flat_map(|s| s.x.iter().copied()))
        .ok_or_else(|| Error::Shape("scatter has no finite points".into()))?;
    let y = finite_range(series.iter().flat_map(|s| s.y.iter().copied()))
        .ok_or_else(|| Error::Shape("scatter has no finite points".into()))?;
    let frame = Frame { x, y, log_y: false };
    let mut out = String::new();
    header(&mut out, axes);
    axes_box(&mut out, &frame, axes, true);
    for (i, s) in series.iter().enumerate() {
        for (&xv, &yv) in s.x.iter().zip(&s.y) {
            if xv.is_finite() && yv.is_finite() {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{}" fill-opacity="0.6"/>"#,
                    frame.px(xv),
                    frame.py(yv),
                    PALETTE[i % PALETTE.len()]
                );
            }
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
