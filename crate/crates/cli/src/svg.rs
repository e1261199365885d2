//! Minimal standalone SVG 1.1 plots: polylines and heatmaps.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// One polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Roughly five round tick values covering `[lo, hi]`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(a, b): (f64, f64)| {
            if b > a {
                (a, b)
            } else {
                let d = if a == 0.0 { 1.0 } else { a.abs() * 0.1 };
                (a - d, b + d)
            }
        };
        Self { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str, log: bool) {
    let (x0, x1) = (frame.px(frame.x.0), frame.px(frame.x.1));
    let (y0, y1) = (frame.py(frame.y.0), frame.py(frame.y.1));
    let _ = writeln!(
        out,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let label = |v: f64| if log { fmt_tick(10f64.powf(v)) } else { fmt_tick(v) };
    for t in nice_ticks(frame.x.0, frame.x.1) {
        let x = frame.px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            label(t)
        );
    }
    for t in nice_ticks(frame.y.0, frame.y.1) {
        let y = frame.py(t);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let (cx, cy) = (20.0, (y0 + y1) / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{cx}" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 {cx} {cy:.2})">{}</text>"#,
        escape(y_label)
    );
}

fn bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((a, b)) => Some((a.min(v), b.max(v))),
    })
}

/// Polylines on shared axes. With `log_log`, non-positive points are
/// dropped and both axes are base-10 logarithmic.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log_log: bool) -> String {
    let map = |(x, y): (f64, f64)| {
        if log_log {
            (x > 0.0 && y > 0.0).then(|| (x.log10(), y.log10()))
        } else {
            Some((x, y))
        }
    };
    let mapped: Vec<Vec<Option<(f64, f64)>>> = series
        .iter()
        .map(|s| s.points.iter().map(|&p| map(p).filter(|q| q.0.is_finite() && q.1.is_finite())).collect())
        .collect();
    let all = || mapped.iter().flatten().flatten();
    let frame = Frame::new(
        bounds(all().map(|p| p.0)).unwrap_or((0.0, 1.0)),
        bounds(all().map(|p| p.1)).unwrap_or((0.0, 1.0)),
    );
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, x_label, y_label, log_log);
    for (k, (s, pts)) in series.iter().zip(&mapped).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        // Missing points break the line.
        for run in pts.split(Option::is_none) {
            let coords: Vec<String> = run
                .iter()
                .flatten()
                .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
                .collect();
            match coords.len() {
                0 => {}
                1 => {
                    let (x, y) = coords[0].split_once(',').expect("pair");
                    let _ = writeln!(out, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
                }
                _ => {
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        coords.join(" ")
                    );
                }
            }
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn color_map(t: f64) -> String {
    // Dark blue through teal to yellow.
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let w = t - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| (p + (q - p) * w).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap of `z[row][col]` over sorted `xs` (columns) and `ys` (rows);
/// `NaN` cells are grey.
pub fn heatmap(title: &str, x_label: &str, y_label: &str, z_label: &str, xs: &[f64], ys: &[f64], z: &[Vec<f64>]) -> String {
    let edges = |v: &[f64]| -> Vec<f64> {
        if v.len() == 1 {
            return vec![v[0] - 0.5, v[0] + 0.5];
        }
        let mut e = vec![v[0] - (v[1] - v[0]) / 2.0];
        e.extend(v.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        e.push(v[v.len() - 1] + (v[v.len() - 1] - v[v.len() - 2]) / 2.0);
        e
    };
    let (xe, ye) = (edges(xs), edges(ys));
    let frame = Frame::new((xe[0], xe[xe.len() - 1]), (ye[0], ye[ye.len() - 1]));
    let (lo, hi) = bounds(z.iter().flatten().copied()).unwrap_or((0.0, 1.0));
    let scale = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    let mut out = String::new();
    header(&mut out, title);
    for (r, row) in z.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let (x0, x1) = (frame.px(xe[c]), frame.px(xe[c + 1]));
            let (y0, y1) = (frame.py(ye[r]), frame.py(ye[r + 1]));
            let fill = if v.is_finite() { color_map(scale(v)) } else { "#bbbbbb".into() };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="none"/>"#,
                x0.min(x1),
                y0.min(y1),
                (x1 - x0).abs() + 0.3,
                (y1 - y0).abs() + 0.3
            );
        }
    }
    axes(&mut out, &frame, x_label, y_label, false);
    let (bx, top, bottom) = (WIDTH - RIGHT + 20.0, TOP, HEIGHT - BOTTOM);
    let steps = 50;
    for k in 0..steps {
        let h = (bottom - top) / steps as f64;
        let y = bottom - (k + 1) as f64 * h;
        let _ = writeln!(
            out,
            r#"<rect x="{bx}" y="{y:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            h + 0.3,
            color_map((k as f64 + 0.5) / steps as f64)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{bottom}">{}</text><text x="{}" y="{}">{}</text><text x="{bx}" y="{}">{}</text>"#,
        bx + 20.0,
        fmt_tick(lo),
        bx + 20.0,
        top + 10.0,
        fmt_tick(hi),
        top - 8.0,
        escape(z_label)
    );
    out.push_str("</svg>\n");
    out
}
